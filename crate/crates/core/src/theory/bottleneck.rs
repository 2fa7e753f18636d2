//! Two-layer linear classifier `O = X W₁ᵀ W₂ᵀ + 1 bᵀ` with a rank bottleneck.
//!
//! Rows of `X` are examples, so the effective weight `W₂ W₁` is `C × D`
//! with rank at most the bottleneck width.

use crate::error::{MheError, Result};
use crate::linalg::matrix::DenseMatrix;
use crate::linalg::ops::softmax_slice;
use crate::linalg::{Adam, DenseVector, RngState};

/// Training objective for the bottleneck model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// `½‖O − Y‖²_F` against one-hot targets.
    Frobenius,
    /// Softmax cross-entropy averaged over examples.
    CrossEntropy,
}

impl std::str::FromStr for LossKind {
    type Err = MheError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "frobenius" | "fro" | "mse" => Ok(LossKind::Frobenius),
            "ce" | "cross-entropy" | "crossentropy" => Ok(LossKind::CrossEntropy),
            other => Err(MheError::Usage(format!(
                "unknown loss kind '{other}' (expected ce or frobenius)"
            ))),
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossKind::Frobenius => "frobenius",
            LossKind::CrossEntropy => "ce",
        })
    }
}

/// Bottleneck classifier parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct BottleneckModel {
    /// `r × D`.
    pub w1: DenseMatrix,
    /// `C × r`.
    pub w2: DenseMatrix,
    pub bias: Option<DenseVector>,
}

/// Gradients with the same layout as [`BottleneckModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct BottleneckGrads {
    pub w1: DenseMatrix,
    pub w2: DenseMatrix,
    pub bias: Option<DenseVector>,
}

impl BottleneckGrads {
    pub fn norm(&self) -> f64 {
        let b: f64 = self
            .bias
            .as_ref()
            .map_or(0.0, |b| b.as_slice().iter().map(|v| v * v).sum());
        (self.w1.frobenius_norm().powi(2) + self.w2.frobenius_norm().powi(2) + b).sqrt()
    }
}

/// Seeded bottleneck model with a zero bias: `W₁ ~ N(0, 1/D)`, `W₂ ~ N(0, 1/r)`.
pub fn bottleneck_model(
    feature_dim: usize,
    bottleneck_dim: usize,
    num_classes: usize,
    seed: u64,
) -> Result<BottleneckModel> {
    BottleneckModel::new(feature_dim, bottleneck_dim, num_classes, true, &mut RngState::new(seed))
}

impl BottleneckModel {
    pub fn new(
        feature_dim: usize,
        bottleneck_dim: usize,
        num_classes: usize,
        with_bias: bool,
        rng: &mut RngState,
    ) -> Result<Self> {
        if bottleneck_dim == 0 || feature_dim == 0 || num_classes == 0 {
            return Err(MheError::domain("bottleneck, feature and class dimensions must be positive"));
        }
        let w1 = rng.normal_matrix(bottleneck_dim, feature_dim, 1.0 / (feature_dim as f64).sqrt());
        let w2 = rng.normal_matrix(num_classes, bottleneck_dim, 1.0 / (bottleneck_dim as f64).sqrt());
        Ok(BottleneckModel {
            w1,
            w2,
            bias: with_bias.then(|| DenseVector::zeros(num_classes)),
        })
    }

    pub fn num_classes(&self) -> usize {
        self.w2.rows()
    }

    pub fn bottleneck_dim(&self) -> usize {
        self.w1.rows()
    }

    /// `W₂ W₁`, the `C × D` weight the two layers act as.
    pub fn effective_weight(&self) -> DenseMatrix {
        self.w2.matmul(&self.w1).expect("bottleneck layers are conformable")
    }

    /// Bottleneck activations `X W₁ᵀ` and outputs `O`, both row-per-example.
    fn forward(&self, x: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix)> {
        if x.cols() != self.w1.cols() {
            return Err(MheError::shape(
                format!("{} feature columns", self.w1.cols()),
                format!("{} columns", x.cols()),
            ));
        }
        let s = x.matmul(&self.w1.transpose())?;
        let mut o = s.matmul(&self.w2.transpose())?;
        if let Some(b) = &self.bias {
            for i in 0..o.rows() {
                for (v, bj) in o.row_mut(i).iter_mut().zip(b.as_slice()) {
                    *v += bj;
                }
            }
        }
        Ok((s, o))
    }

    pub fn outputs(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        self.forward(x).map(|(_, o)| o)
    }

    /// Row-wise softmax of the outputs.
    pub fn softmax_outputs(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        let mut o = self.outputs(x)?;
        for i in 0..o.rows() {
            let p = softmax_slice(o.row(i), 1.0);
            o.row_mut(i).copy_from_slice(&p);
        }
        Ok(o)
    }

    /// Fraction of rows whose argmax equals the label.
    pub fn accuracy(&self, x: &DenseMatrix, labels: &[usize]) -> Result<f64> {
        let o = self.outputs(x)?;
        if labels.len() != o.rows() || labels.is_empty() {
            return Err(MheError::shape(
                format!("{} labels", o.rows()),
                format!("{} labels", labels.len()),
            ));
        }
        let hits = (0..o.rows())
            .filter(|&i| crate::linalg::matrix::argmax(o.row(i)) == Some(labels[i]))
            .count();
        Ok(hits as f64 / labels.len() as f64)
    }

    /// Loss and parameter gradients on the full batch.
    pub fn loss_and_grads(
        &self,
        x: &DenseMatrix,
        labels: &[usize],
        kind: LossKind,
    ) -> Result<(f64, BottleneckGrads)> {
        let (s, o) = self.forward(x)?;
        let (n, c) = o.shape();
        if labels.len() != n {
            return Err(MheError::shape(format!("{n} labels"), format!("{} labels", labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
            return Err(MheError::Range {
                index: bad,
                capacity: c,
            });
        }
        let mut g = DenseMatrix::zeros(n, c);
        let mut loss = 0.0;
        match kind {
            LossKind::Frobenius => {
                for i in 0..n {
                    for j in 0..c {
                        let target = if labels[i] == j { 1.0 } else { 0.0 };
                        let d = o[(i, j)] - target;
                        loss += 0.5 * d * d;
                        g.row_mut(i)[j] = d;
                    }
                }
            }
            LossKind::CrossEntropy => {
                let inv = 1.0 / n as f64;
                for i in 0..n {
                    let row = o.row(i);
                    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
                    loss += inv * (max + sum.ln() - row[labels[i]]);
                    let gi = g.row_mut(i);
                    for (gj, v) in gi.iter_mut().zip(row) {
                        *gj = inv * (v - max).exp() / sum;
                    }
                    gi[labels[i]] -= inv;
                }
            }
        }
        // O = S W₂ᵀ + b, S = X W₁ᵀ.
        let gw2 = g.transpose().matmul(&s)?;
        let gs = g.matmul(&self.w2)?;
        let gw1 = gs.transpose().matmul(x)?;
        let gb = self.bias.as_ref().map(|_| {
            let mut b = DenseVector::zeros(c);
            for i in 0..n {
                for (bj, gj) in b.as_mut_slice().iter_mut().zip(g.row(i)) {
                    *bj += gj;
                }
            }
            b
        });
        Ok((
            loss,
            BottleneckGrads {
                w1: gw1,
                w2: gw2,
                bias: gb,
            },
        ))
    }

    pub fn sgd(&mut self, grads: &BottleneckGrads, lr: f64) {
        for (p, g) in self.w1.as_mut_slice().iter_mut().zip(grads.w1.as_slice()) {
            *p -= lr * g;
        }
        for (p, g) in self.w2.as_mut_slice().iter_mut().zip(grads.w2.as_slice()) {
            *p -= lr * g;
        }
        if let (Some(b), Some(gb)) = (&mut self.bias, &grads.bias) {
            for (p, g) in b.as_mut_slice().iter_mut().zip(gb.as_slice()) {
                *p -= lr * g;
            }
        }
    }

    /// Adds `scale · N(0, 1)` noise to every parameter.
    pub fn perturb(&mut self, scale: f64, rng: &mut RngState) {
        let mut bump = |v: &mut [f64]| {
            for p in v {
                *p += scale * rng.normal();
            }
        };
        bump(self.w1.as_mut_slice());
        bump(self.w2.as_mut_slice());
        if let Some(b) = &mut self.bias {
            bump(b.as_mut_slice());
        }
    }
}

/// Adam state for the three parameter blocks of a [`BottleneckModel`].
#[derive(Debug, Clone)]
pub struct BottleneckAdam {
    w1: Adam,
    w2: Adam,
    bias: Adam,
}

impl BottleneckAdam {
    pub fn new(model: &BottleneckModel) -> Self {
        BottleneckAdam {
            w1: Adam::new(model.w1.as_slice().len()),
            w2: Adam::new(model.w2.as_slice().len()),
            bias: Adam::new(model.bias.as_ref().map_or(0, DenseVector::len)),
        }
    }

    pub fn step(&mut self, model: &mut BottleneckModel, grads: &BottleneckGrads, lr: f64) -> Result<()> {
        self.w1.step(model.w1.as_mut_slice(), grads.w1.as_slice(), lr)?;
        self.w2.step(model.w2.as_mut_slice(), grads.w2.as_slice(), lr)?;
        if let (Some(b), Some(gb)) = (&mut model.bias, &grads.bias) {
            self.bias.step(b.as_mut_slice(), gb.as_slice(), lr)?;
        }
        Ok(())
    }
}
