//! Product strategy (MHP): independent heads whose outputs combine through
//! the mixed-radix code. The vanilla classifier is the single-head case.

use std::str::FromStr;

use super::{Gradients, MultiHeadModel};
use crate::codec::{combine, decompose, GlobalLabel, LocalLabels};
use crate::error::{MheError, Result};
use crate::linalg::matrix::{argmax, DenseVector};
use crate::linalg::ops::{bce_slice, cross_entropy_slice};
use crate::planner::Strategy;

/// Training objective for the product heads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossMode {
    /// Per-head softmax cross-entropy, summed over heads.
    #[default]
    Softmax,
    /// Sigmoid binary cross-entropy over the concatenated heads with
    /// multi-hot local targets.
    Sigmoid,
}

impl FromStr for LossMode {
    type Err = MheError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "softmax" | "ce" => Ok(LossMode::Softmax),
            "sigmoid" | "bce" => Ok(LossMode::Sigmoid),
            other => Err(MheError::Usage(format!(
                "unknown loss '{other}' (expected softmax or sigmoid)"
            ))),
        }
    }
}

impl MultiHeadModel {
    /// One SGD step of the product strategy on a single example.
    ///
    /// With several labels the softmax loss is averaged over the labels; the
    /// sigmoid loss marks every label digit as positive in its head.
    pub fn mhp_train_step(
        &mut self,
        x: &DenseVector,
        labels: &[GlobalLabel],
        lr: f64,
        mode: LossMode,
    ) -> Result<f64> {
        self.expect_strategy(&[Strategy::Mhp, Strategy::Vanilla], "mhp_train_step")?;
        self.product_step(x, labels, lr, mode).map(|(loss, _)| loss)
    }

    /// Same update as [`Self::mhp_train_step`] for the one-hot baseline.
    pub fn vanilla_train_step(
        &mut self,
        x: &DenseVector,
        labels: &[GlobalLabel],
        lr: f64,
        mode: LossMode,
    ) -> Result<f64> {
        self.expect_strategy(&[Strategy::Vanilla], "vanilla_train_step")?;
        self.product_step(x, labels, lr, mode).map(|(loss, _)| loss)
    }

    /// Loss and gradients of the product objective without updating.
    pub fn mhp_gradients(
        &self,
        x: &DenseVector,
        labels: &[GlobalLabel],
        mode: LossMode,
    ) -> Result<(f64, Gradients)> {
        self.expect_strategy(&[Strategy::Mhp, Strategy::Vanilla], "mhp_gradients")?;
        self.product_gradients(x, labels, mode)
            .map(|(loss, grads, _)| (loss, grads))
    }

    pub(crate) fn product_step(
        &mut self,
        x: &DenseVector,
        labels: &[GlobalLabel],
        lr: f64,
        mode: LossMode,
    ) -> Result<(f64, Vec<LocalLabels>)> {
        let (loss, grads, locals) = self.product_gradients(x, labels, mode)?;
        self.apply_gradients(&grads, lr);
        Ok((loss, locals))
    }

    /// Also returns the local digits that were used as targets.
    fn product_gradients(
        &self,
        x: &DenseVector,
        labels: &[GlobalLabel],
        mode: LossMode,
    ) -> Result<(f64, Gradients, Vec<LocalLabels>)> {
        if labels.is_empty() {
            return Err(MheError::domain("training example has no labels"));
        }
        let locals = labels
            .iter()
            .map(|&y| {
                self.check_label(y)?;
                decompose(y, &self.plan)
            })
            .collect::<Result<Vec<_>>>()?;
        let f = self.backbone.forward(x.as_slice())?;
        let logits: Vec<Vec<f64>> = self.heads.iter().map(|h| h.logits(&f)).collect();

        let (loss, head_grads) = match mode {
            LossMode::Softmax => {
                let scale = 1.0 / locals.len() as f64;
                let mut loss = 0.0;
                let mut grads: Vec<Vec<f64>> = logits.iter().map(|o| vec![0.0; o.len()]).collect();
                for local in &locals {
                    for (h, &digit) in local.indices().iter().enumerate() {
                        let (l, g) = cross_entropy_slice(&logits[h], digit)?;
                        loss += scale * l;
                        for (acc, gi) in grads[h].iter_mut().zip(g) {
                            *acc += scale * gi;
                        }
                    }
                }
                (loss, grads)
            }
            LossMode::Sigmoid => {
                let mut targets: Vec<Vec<f64>> = logits.iter().map(|o| vec![0.0; o.len()]).collect();
                for local in &locals {
                    for (h, &digit) in local.indices().iter().enumerate() {
                        targets[h][digit] = 1.0;
                    }
                }
                let (loss, flat_grad) = bce_slice(&logits.concat(), &targets.concat())?;
                let mut grads = Vec::with_capacity(logits.len());
                let mut offset = 0;
                for o in &logits {
                    grads.push(flat_grad[offset..offset + o.len()].to_vec());
                    offset += o.len();
                }
                (loss, grads)
            }
        };

        let mut grads = Gradients::empty(self);
        let mut df = vec![0.0; f.len()];
        for (h, (head, g)) in self.heads.iter().zip(&head_grads).enumerate() {
            head.accumulate_input_grad(g, &mut df);
            grads.add_head(h, g, &f);
        }
        if self.backbone.is_linear() {
            grads.backbone.push((df, x.as_slice().to_vec()));
        }
        Ok((loss, grads, locals))
    }

    /// Combines the per-head argmaxes into a global label.
    ///
    /// When the plan capacity exceeds `C` the combination can land in the
    /// unused tail `[C, capacity)`; such a prediction is simply never correct.
    pub fn mhp_predict(&self, x: &DenseVector) -> Result<GlobalLabel> {
        self.expect_strategy(&[Strategy::Mhp, Strategy::Vanilla], "mhp_predict")?;
        let digits = self
            .forward_heads(x)?
            .iter()
            .map(|o| argmax(o.as_slice()).ok_or_else(|| MheError::domain("empty head")))
            .collect::<Result<Vec<_>>>()?;
        combine(&LocalLabels::new(digits), &self.plan)
    }

    /// Argmax of the single head.
    pub fn vanilla_predict(&self, x: &DenseVector) -> Result<GlobalLabel> {
        self.expect_strategy(&[Strategy::Vanilla], "vanilla_predict")?;
        self.mhp_predict(x)
    }
}
