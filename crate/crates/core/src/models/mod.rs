//! Linear multi-head classifiers.
//!
//! Every strategy shares the same layout: an optional linear backbone
//! `f = B x` followed by one affine head per plan entry, `Oʰ = Wʰ f + bʰ`.
//! The cascade strategy additionally owns one embedding table per head after
//! the first.

mod cascade;
pub mod checkpoint;
mod grads;
mod product;
mod sampling;
pub mod train;

use crate::codec::{GlobalLabel, HeadPlan};
use crate::error::{MheError, Result};
use crate::linalg::matrix::{dot, DenseMatrix, DenseVector};
use crate::linalg::RngState;
use crate::planner::{check_plan_covers, Strategy};

pub use grads::{Gradients, HeadGrad};
pub use product::LossMode;

/// Feature map in front of the heads.
#[derive(Debug, Clone, PartialEq)]
pub enum Backbone {
    Identity { dim: usize },
    Linear(DenseMatrix),
}

impl Backbone {
    pub fn input_dim(&self) -> usize {
        match self {
            Backbone::Identity { dim } => *dim,
            Backbone::Linear(m) => m.cols(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Backbone::Identity { dim } => *dim,
            Backbone::Linear(m) => m.rows(),
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, Backbone::Linear(_))
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(MheError::shape(
                format!("input of length {}", self.input_dim()),
                format!("length {}", x.len()),
            ));
        }
        Ok(match self {
            Backbone::Identity { .. } => x.to_vec(),
            Backbone::Linear(m) => m.matvec(x)?.into_inner(),
        })
    }

    /// `B -= lr · g xᵀ`, touching only the columns where `x` is non-zero.
    pub(crate) fn sgd(&mut self, grad_features: &[f64], x: &[f64], lr: f64) {
        if let Backbone::Linear(m) = self {
            let nz: Vec<(usize, f64)> = x
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != 0.0)
                .map(|(j, &v)| (j, v))
                .collect();
            for (i, &g) in grad_features.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let row = m.row_mut(i);
                for &(j, v) in &nz {
                    row[j] -= lr * g * v;
                }
            }
        }
    }
}

/// One affine classification head.
#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    pub weight: DenseMatrix,
    pub bias: DenseVector,
}

impl Head {
    pub fn zeros(width: usize, feature_dim: usize) -> Self {
        Head {
            weight: DenseMatrix::zeros(width, feature_dim),
            bias: DenseVector::zeros(width),
        }
    }

    pub fn width(&self) -> usize {
        self.weight.rows()
    }

    pub(crate) fn logits(&self, f: &[f64]) -> Vec<f64> {
        (0..self.weight.rows())
            .map(|r| dot(self.weight.row(r), f) + self.bias[r])
            .collect()
    }

    /// Adds `Wᵀ g` to `acc`, rows in ascending order.
    pub(crate) fn accumulate_input_grad(&self, g: &[f64], acc: &mut [f64]) {
        for (r, &gr) in g.iter().enumerate() {
            for (a, w) in acc.iter_mut().zip(self.weight.row(r)) {
                *a += w * gr;
            }
        }
    }
}

/// Shape and initialization settings for a new model.
#[derive(Debug, Clone)]
pub struct ModelConfig {
    pub strategy: Strategy,
    pub plan: HeadPlan,
    pub num_classes: usize,
    pub input_dim: usize,
    /// `None` selects the identity backbone.
    pub feature_dim: Option<usize>,
    /// Beam width used by cascade inference.
    pub beam_width: usize,
}

impl ModelConfig {
    pub fn new(strategy: Strategy, plan: HeadPlan, num_classes: usize, input_dim: usize) -> Self {
        ModelConfig {
            strategy,
            plan,
            num_classes,
            input_dim,
            feature_dim: None,
            beam_width: 1,
        }
    }

    pub fn with_feature_dim(mut self, dim: usize) -> Self {
        self.feature_dim = Some(dim);
        self
    }

    pub fn with_beam_width(mut self, k: usize) -> Self {
        self.beam_width = k;
        self
    }
}

/// Backbone, heads and (for the cascade) per-head prefix embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiHeadModel {
    pub(crate) strategy: Strategy,
    pub(crate) plan: HeadPlan,
    pub(crate) num_classes: usize,
    pub(crate) backbone: Backbone,
    pub(crate) heads: Vec<Head>,
    /// `embeddings[h - 1]` belongs to head `h >= 1` and has one row per
    /// prefix of the first `h` digits.
    pub(crate) embeddings: Vec<DenseMatrix>,
    pub(crate) beam_width: usize,
}

impl MultiHeadModel {
    /// Randomly initialized model; every block is drawn from `N(0, 1/fan_in)`.
    pub fn new(config: ModelConfig, rng: &mut RngState) -> Result<Self> {
        let mut model = Self::zeros(config)?;
        if let Backbone::Linear(m) = &mut model.backbone {
            let scale = 1.0 / (m.cols() as f64).sqrt();
            *m = rng.normal_matrix(m.rows(), m.cols(), scale);
        }
        let fdim = model.backbone.output_dim();
        let scale = 1.0 / (fdim as f64).sqrt();
        for head in &mut model.heads {
            head.weight = rng.normal_matrix(head.weight.rows(), fdim, scale);
        }
        for e in &mut model.embeddings {
            *e = rng.normal_matrix(e.rows(), fdim, scale);
        }
        Ok(model)
    }

    /// Model with every parameter set to zero (identity backbones stay identity).
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        let ModelConfig {
            strategy,
            plan,
            num_classes,
            input_dim,
            feature_dim,
            beam_width,
        } = config;
        if num_classes == 0 || input_dim == 0 {
            return Err(MheError::domain("model needs at least one class and one input"));
        }
        check_plan_covers(&plan, num_classes, strategy)?;
        if strategy == Strategy::Vanilla && plan.lengths() != [num_classes] {
            return Err(MheError::Plan(format!(
                "the vanilla classifier needs the single-head plan [{num_classes}], got {plan}"
            )));
        }
        if strategy == Strategy::Mhc && beam_width == 0 {
            return Err(MheError::domain("beam width must be positive"));
        }
        let backbone = match feature_dim {
            None => Backbone::Identity { dim: input_dim },
            Some(0) => return Err(MheError::domain("feature dimension must be positive")),
            Some(d) => Backbone::Linear(DenseMatrix::zeros(d, input_dim)),
        };
        let fdim = backbone.output_dim();
        let heads = plan.lengths().iter().map(|&l| Head::zeros(l, fdim)).collect();
        let embeddings = if strategy == Strategy::Mhc {
            (1..plan.num_heads())
                .map(|h| DenseMatrix::zeros(plan.prefix_capacity(h - 1), fdim))
                .collect()
        } else {
            Vec::new()
        };
        Ok(MultiHeadModel {
            strategy,
            plan,
            num_classes,
            backbone,
            heads,
            embeddings,
            beam_width,
        })
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn plan(&self) -> &HeadPlan {
        &self.plan
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn input_dim(&self) -> usize {
        self.backbone.input_dim()
    }

    pub fn feature_dim(&self) -> usize {
        self.backbone.output_dim()
    }

    pub fn beam_width(&self) -> usize {
        self.beam_width
    }

    pub fn backbone(&self) -> &Backbone {
        &self.backbone
    }

    pub fn backbone_mut(&mut self) -> &mut Backbone {
        &mut self.backbone
    }

    pub fn heads(&self) -> &[Head] {
        &self.heads
    }

    pub fn heads_mut(&mut self) -> &mut [Head] {
        &mut self.heads
    }

    pub fn embeddings(&self) -> &[DenseMatrix] {
        &self.embeddings
    }

    pub fn embeddings_mut(&mut self) -> &mut [DenseMatrix] {
        &mut self.embeddings
    }

    pub(crate) fn expect_strategy(&self, expected: &[Strategy], op: &str) -> Result<()> {
        if expected.contains(&self.strategy) {
            Ok(())
        } else {
            Err(MheError::Usage(format!(
                "{op} needs a {} model, this one is {}",
                expected
                    .iter()
                    .map(ToString::to_string)
                    .collect::<Vec<_>>()
                    .join("/"),
                self.strategy
            )))
        }
    }

    pub(crate) fn check_label(&self, y: GlobalLabel) -> Result<()> {
        if y.index() >= self.num_classes {
            return Err(MheError::Range {
                index: y.index(),
                capacity: self.num_classes,
            });
        }
        Ok(())
    }

    /// Raw per-head logits `Oʰ`.
    pub fn forward_heads(&self, x: &DenseVector) -> Result<Vec<DenseVector>> {
        let f = self.backbone.forward(x.as_slice())?;
        Ok(self
            .heads
            .iter()
            .map(|h| DenseVector(h.logits(&f)))
            .collect())
    }

    /// Single best label for any strategy: product combination for MHP,
    /// beam search for MHC, full argmax for MHS and the vanilla classifier.
    pub fn predict(&self, x: &DenseVector) -> Result<GlobalLabel> {
        match self.strategy {
            Strategy::Mhp => self.mhp_predict(x),
            Strategy::Mhc => Ok(self.mhc_predict(x, self.beam_width)?.labels[0]),
            Strategy::Mhs => self.mhs_predict(x),
            Strategy::Vanilla => self.vanilla_predict(x),
        }
    }

    /// Top-`k` ranked labels.
    ///
    /// MHC uses a beam of width `max(k, beam_width)`; the other strategies
    /// rank the full score vector (the Kronecker product of per-head softmax
    /// outputs for MHP, which is only feasible for small capacities).
    pub fn predict_top_k(&self, x: &DenseVector, k: usize) -> Result<PredictionSet> {
        if k == 0 {
            return Err(MheError::domain("K must be at least 1"));
        }
        match self.strategy {
            Strategy::Mhc => {
                let beam = k.max(self.beam_width).min(self.num_classes);
                let mut set = self.mhc_predict(x, beam)?;
                set.truncate(k);
                Ok(set)
            }
            Strategy::Mhp => {
                let probs: Vec<DenseVector> = self
                    .forward_heads(x)?
                    .iter()
                    .map(|o| crate::linalg::softmax(o, 1.0))
                    .collect::<Result<_>>()?;
                let full = crate::codec::kronecker_combine(&probs)?;
                Ok(PredictionSet::from_scores(
                    &full.as_slice()[..self.num_classes],
                    k,
                ))
            }
            Strategy::Mhs | Strategy::Vanilla => {
                let logits: Vec<f64> = self.forward_heads(x)?.into_iter().flat_map(|v| v.0).collect();
                Ok(PredictionSet::from_scores(&logits[..self.num_classes], k))
            }
        }
    }
}

/// Ranked labels with their scores, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub labels: Vec<GlobalLabel>,
    pub scores: Vec<f64>,
}

impl PredictionSet {
    /// Top-`k` of `scores`, ties broken by ascending index.
    pub fn from_scores(scores: &[f64], k: usize) -> Self {
        let ranked = top_k(scores.iter().copied().enumerate(), k);
        PredictionSet {
            labels: ranked.iter().map(|&(i, _)| GlobalLabel::new(i)).collect(),
            scores: ranked.iter().map(|&(_, s)| s).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn truncate(&mut self, k: usize) {
        self.labels.truncate(k);
        self.scores.truncate(k);
    }
}

/// Stable Top-K: sorts by score descending, then by candidate index ascending.
pub(crate) fn top_k(candidates: impl IntoIterator<Item = (usize, f64)>, k: usize) -> Vec<(usize, f64)> {
    let mut all: Vec<(usize, f64)> = candidates.into_iter().collect();
    all.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}
