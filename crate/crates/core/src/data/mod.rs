//! Sparse datasets, synthetic generators and evaluation metrics.

pub mod metrics;
pub mod synth;
pub mod xmlc;

use crate::codec::GlobalLabel;
use crate::linalg::{DenseMatrix, DenseVector};

pub use metrics::{accuracy, precision_at_k, MetricsReport};
pub use synth::{gen_gaussian_classification, gen_separable_toy};
pub use xmlc::{load_xmlc, parse_xmlc, save_xmlc, write_xmlc};

/// One instance: sparse features sorted by index and a sorted label set.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseExample {
    pub features: Vec<(usize, f64)>,
    pub labels: Vec<GlobalLabel>,
}

impl SparseExample {
    /// Examples without labels are kept in the dataset but skipped by training.
    pub fn is_unlabeled(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn has_no_features(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dense(&self, num_features: usize) -> DenseVector {
        let mut x = DenseVector::zeros(num_features);
        for &(j, v) in &self.features {
            x[j] = v;
        }
        x
    }
}

/// A collection of examples with declared feature and label dimensions.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseDataset {
    pub name: String,
    pub num_features: usize,
    pub num_labels: usize,
    pub examples: Vec<SparseExample>,
}

impl SparseDataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn unlabeled_count(&self) -> usize {
        self.examples.iter().filter(|e| e.is_unlabeled()).count()
    }

    /// True when some example carries more than one label.
    pub fn is_multi_label(&self) -> bool {
        self.examples.iter().any(|e| e.labels.len() > 1)
    }

    /// Dense `N × D` feature matrix.
    pub fn feature_matrix(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.examples.len(), self.num_features);
        for (i, e) in self.examples.iter().enumerate() {
            let row = m.row_mut(i);
            for &(j, v) in &e.features {
                row[j] = v;
            }
        }
        m
    }

    /// Dense feature vectors, one per example.
    pub fn dense_features(&self) -> Vec<DenseVector> {
        self.examples.iter().map(|e| e.dense(self.num_features)).collect()
    }

    /// First label of every example (`None` for unlabeled ones).
    pub fn first_labels(&self) -> Vec<Option<GlobalLabel>> {
        self.examples.iter().map(|e| e.labels.first().copied()).collect()
    }
}
