//! Cascade strategy (MHC): heads are evaluated in order, and each head after
//! the first scores the children of a beam of prefixes kept from the previous
//! stage.
//!
//! A child `(p, l)` of prefix `p` at head `h` is scored
//! `Õʰ[p, l] = Oʰ[l] · ⟨f, Eʰ[p]⟩`, and its global prefix index is
//! `p · Lʰ + l`, so the final beam holds global labels directly.

use super::{top_k, Gradients, LossMode, MultiHeadModel, PredictionSet};
use crate::codec::GlobalLabel;
use crate::error::{MheError, Result};
use crate::linalg::matrix::{dot, DenseVector};
use crate::linalg::ops::{bce_slice, cross_entropy_slice, sigmoid, softmax_slice};
use crate::planner::Strategy;

/// Candidates scored at one stage: prefix indices and raw scores.
struct Stage {
    ids: Vec<usize>,
    scores: Vec<f64>,
}

impl MultiHeadModel {
    fn child_is_valid(&self, prefix: usize, h: usize, strides: &[usize]) -> bool {
        prefix.saturating_mul(strides[h]) < self.num_classes
    }

    fn check_beam(&self, k: usize) -> Result<()> {
        if k == 0 {
            return Err(MheError::domain("beam width must be at least 1"));
        }
        if k > self.num_classes {
            return Err(MheError::domain(format!(
                "beam width {k} exceeds the {} available labels",
                self.num_classes
            )));
        }
        Ok(())
    }

    /// Beam search over the cascade; returns the `k` best labels with their
    /// final-stage scores. Ties are broken toward the smaller index.
    ///
    /// Intermediate stages keep `min(k, available)` prefixes, so `k` only
    /// has to fit the label space, not every stage.
    pub fn mhc_predict(&self, x: &DenseVector, k: usize) -> Result<PredictionSet> {
        self.expect_strategy(&[Strategy::Mhc], "mhc_predict")?;
        self.check_beam(k)?;
        let f = self.backbone.forward(x.as_slice())?;
        let strides = self.plan.strides();

        let first = self.heads[0].logits(&f);
        let mut beam = top_k(
            first
                .iter()
                .copied()
                .enumerate()
                .filter(|&(p, _)| self.child_is_valid(p, 0, &strides)),
            k,
        );
        for h in 1..self.heads.len() {
            let o = self.heads[h].logits(&f);
            let table = &self.embeddings[h - 1];
            let width = o.len();
            let mut candidates = Vec::with_capacity(beam.len() * width);
            for &(p, _) in &beam {
                let proj = dot(&f, table.row(p));
                for (l, &ol) in o.iter().enumerate() {
                    let child = p * width + l;
                    if self.child_is_valid(child, h, &strides) {
                        candidates.push((child, ol * proj));
                    }
                }
            }
            beam = top_k(candidates, k);
        }
        Ok(PredictionSet {
            labels: beam.iter().map(|&(i, _)| GlobalLabel::new(i)).collect(),
            scores: beam.iter().map(|&(_, s)| s).collect(),
        })
    }

    /// One teacher-forced SGD step of the cascade.
    pub fn mhc_train_step(
        &mut self,
        x: &DenseVector,
        labels: &[GlobalLabel],
        lr: f64,
        k: usize,
        mode: LossMode,
    ) -> Result<f64> {
        let (loss, grads) = self.mhc_gradients(x, labels, k, mode)?;
        self.apply_gradients(&grads, lr);
        Ok(loss)
    }

    /// Loss and gradients of the teacher-forced cascade objective.
    ///
    /// Each stage's loss is taken over the children of the current beam:
    /// softmax cross-entropy against the single true child, or sigmoid BCE
    /// with every true child marked. The next beam ranks candidates by
    /// `φ(score)` after boosting ground-truth candidates by one; since
    /// `φ ∈ [0, 1]` the boost puts every true candidate first, and ranking
    /// on the pair (is_true, φ) applies that boost without rounding effects.
    pub fn mhc_gradients(
        &self,
        x: &DenseVector,
        labels: &[GlobalLabel],
        k: usize,
        mode: LossMode,
    ) -> Result<(f64, Gradients)> {
        self.expect_strategy(&[Strategy::Mhc], "mhc_train_step")?;
        self.check_beam(k)?;
        if labels.is_empty() {
            return Err(MheError::domain("training example has no labels"));
        }
        if mode == LossMode::Softmax && labels.len() != 1 {
            return Err(MheError::domain(format!(
                "softmax cascade loss needs exactly one label, got {}; use the sigmoid loss",
                labels.len()
            )));
        }
        for &y in labels {
            self.check_label(y)?;
        }
        let strides = self.plan.strides();
        let true_prefix = |h: usize| -> Vec<usize> {
            let mut t: Vec<usize> = labels.iter().map(|y| y.index() / strides[h]).collect();
            t.sort_unstable();
            t.dedup();
            t
        };

        let f = self.backbone.forward(x.as_slice())?;
        let mut grads = Gradients::empty(self);
        let mut df = vec![0.0; f.len()];
        let mut total = 0.0;

        // Stage 0 scores every first digit.
        let o0 = self.heads[0].logits(&f);
        let stage = Stage {
            ids: (0..o0.len()).collect(),
            scores: o0,
        };
        let truth = true_prefix(0);
        let (loss, g) = stage_loss(&stage, &truth, mode)?;
        total += loss;
        self.heads[0].accumulate_input_grad(&g, &mut df);
        grads.add_head(0, &g, &f);
        let mut beam = self.next_beam(&stage, &truth, k, 0, &strides, mode);

        for h in 1..self.heads.len() {
            let o = self.heads[h].logits(&f);
            let table = &self.embeddings[h - 1];
            let width = o.len();
            let projections: Vec<f64> = beam.iter().map(|&p| dot(&f, table.row(p))).collect();
            let mut stage = Stage {
                ids: Vec::with_capacity(beam.len() * width),
                scores: Vec::with_capacity(beam.len() * width),
            };
            for (&p, &proj) in beam.iter().zip(&projections) {
                for (l, &ol) in o.iter().enumerate() {
                    stage.ids.push(p * width + l);
                    stage.scores.push(ol * proj);
                }
            }
            let truth = true_prefix(h);
            let (loss, g) = stage_loss(&stage, &truth, mode)?;
            total += loss;

            // Õ[p, l] = O[l] · s_p with s_p = ⟨f, E[p]⟩.
            let mut g_head = vec![0.0; width];
            let mut emb_rows = Vec::with_capacity(beam.len());
            for (slot, (&p, &proj)) in beam.iter().zip(&projections).enumerate() {
                let gs = &g[slot * width..(slot + 1) * width];
                let mut g_proj = 0.0;
                for l in 0..width {
                    g_head[l] += gs[l] * proj;
                    g_proj += gs[l] * o[l];
                }
                let row = table.row(p);
                for (d, e) in df.iter_mut().zip(row) {
                    *d += g_proj * e;
                }
                emb_rows.push((p, f.iter().map(|v| g_proj * v).collect::<Vec<_>>()));
            }
            grads.embeddings[h - 1].extend(emb_rows);
            self.heads[h].accumulate_input_grad(&g_head, &mut df);
            grads.add_head(h, &g_head, &f);
            beam = self.next_beam(&stage, &truth, k, h, &strides, mode);
        }

        if self.backbone.is_linear() {
            grads.backbone.push((df, x.as_slice().to_vec()));
        }
        Ok((total, grads))
    }

    fn next_beam(
        &self,
        stage: &Stage,
        truth: &[usize],
        k: usize,
        h: usize,
        strides: &[usize],
        mode: LossMode,
    ) -> Vec<usize> {
        let phi = match mode {
            LossMode::Softmax => softmax_slice(&stage.scores, 1.0),
            LossMode::Sigmoid => stage.scores.iter().map(|&z| sigmoid(z)).collect(),
        };
        let mut ranked: Vec<(bool, f64, usize)> = stage
            .ids
            .iter()
            .zip(&phi)
            .filter(|(&id, _)| self.child_is_valid(id, h, strides))
            .map(|(&id, &p)| (truth.binary_search(&id).is_ok(), p, id))
            .collect();
        ranked.sort_by(|a, b| b.0.cmp(&a.0).then(b.1.total_cmp(&a.1)).then(a.2.cmp(&b.2)));
        ranked.truncate(k);
        ranked.into_iter().map(|(_, _, id)| id).collect()
    }
}

fn stage_loss(stage: &Stage, truth: &[usize], mode: LossMode) -> Result<(f64, Vec<f64>)> {
    match mode {
        LossMode::Softmax => {
            let target = stage
                .ids
                .iter()
                .position(|id| *id == truth[0])
                .ok_or_else(|| MheError::domain("true prefix dropped from the beam"))?;
            cross_entropy_slice(&stage.scores, target)
        }
        LossMode::Sigmoid => {
            let targets: Vec<f64> = stage
                .ids
                .iter()
                .map(|id| if truth.binary_search(id).is_ok() { 1.0 } else { 0.0 })
                .collect();
            bce_slice(&stage.scores, &targets)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{decompose, HeadPlan};
    use crate::linalg::RngState;
    use crate::models::ModelConfig;
    use proptest::prelude::{prop_assert_eq, proptest};

    fn model(lengths: &[usize], c: usize, d: usize, hidden: Option<usize>, seed: u64) -> MultiHeadModel {
        let mut cfg = ModelConfig::new(Strategy::Mhc, HeadPlan::new(lengths.to_vec()).unwrap(), c, d);
        cfg.feature_dim = hidden;
        MultiHeadModel::new(cfg, &mut RngState::new(seed)).unwrap()
    }

    /// Scores every label by walking its digits; independent of the beam code.
    fn brute_force_scores(m: &MultiHeadModel, x: &DenseVector) -> Vec<f64> {
        let f = m.backbone().forward(x.as_slice()).unwrap();
        let logits = m.forward_heads(x).unwrap();
        (0..m.num_classes())
            .map(|y| {
                let digits = decompose(GlobalLabel::new(y), m.plan()).unwrap();
                let d = digits.indices();
                let h = d.len() - 1;
                if h == 0 {
                    return logits[0][d[0]];
                }
                let mut prefix = 0;
                for (j, &dj) in d[..h].iter().enumerate() {
                    prefix = prefix * m.plan().lengths()[j] + dj;
                }
                let proj: f64 = f.iter().zip(m.embeddings()[h - 1].row(prefix)).map(|(a, b)| a * b).sum();
                logits[h][d[h]] * proj
            })
            .collect()
    }

    #[test]
    fn full_beam_ranks_every_label() {
        let m = model(&[4, 3, 5], 60, 5, Some(4), 7);
        let x = DenseVector(vec![1.0, -0.5, 0.3, 2.0, -1.0]);
        let set = m.mhc_predict(&x, 60).unwrap();
        let oracle = PredictionSet::from_scores(&brute_force_scores(&m, &x), 60);
        assert_eq!(set.labels, oracle.labels);
        assert_eq!(set.scores, oracle.scores);
    }

    #[test]
    fn single_head_is_plain_argmax() {
        let m = model(&[7], 7, 3, None, 1);
        let x = DenseVector(vec![0.2, 1.0, -0.4]);
        let logits = m.forward_heads(&x).unwrap();
        assert_eq!(
            m.mhc_predict(&x, 1).unwrap().labels[0].index(),
            logits[0].argmax().unwrap()
        );
    }

    #[test]
    fn beam_wider_than_label_space_fails() {
        let m = model(&[3, 3], 9, 2, None, 1);
        let x = DenseVector(vec![1.0, 1.0]);
        assert!(matches!(m.mhc_predict(&x, 10), Err(MheError::Domain(_))));
        assert!(matches!(m.mhc_predict(&x, 0), Err(MheError::Domain(_))));
        assert_eq!(m.mhc_predict(&x, 9).unwrap().len(), 9);
        // Stage 0 only has 3 prefixes; a beam of 5 keeps all of them.
        assert_eq!(m.mhc_predict(&x, 5).unwrap().len(), 5);
    }

    #[test]
    fn never_predicts_unused_capacity() {
        let m = model(&[4, 4], 13, 3, None, 4);
        let x = DenseVector(vec![1.0, 0.5, -2.0]);
        let set = m.mhc_predict(&x, 13).unwrap();
        assert!(set.labels.iter().all(|y| y.index() < 13));
        let mut sorted: Vec<usize> = set.labels.iter().map(|y| y.index()).collect();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..13).collect::<Vec<_>>());
    }

    #[test]
    fn training_reaches_the_target() {
        let mut m = model(&[4, 4, 4], 64, 6, Some(8), 3);
        let x = DenseVector(vec![0.5, -1.0, 0.25, 2.0, 1.0, -0.3]);
        let y = GlobalLabel::new(45);
        for _ in 0..300 {
            m.mhc_train_step(&x, &[y], 0.05, 2, LossMode::Softmax).unwrap();
        }
        assert_eq!(m.mhc_predict(&x, 2).unwrap().labels[0], y);
    }

    #[test]
    fn sigmoid_mode_handles_label_sets() {
        let mut m = model(&[3, 3], 9, 4, None, 5);
        let x = DenseVector(vec![1.0, 0.5, -0.5, 0.2]);
        let ys = [GlobalLabel::new(1), GlobalLabel::new(7)];
        let first = m.mhc_train_step(&x, &ys, 0.2, 3, LossMode::Sigmoid).unwrap();
        let mut last = first;
        for _ in 0..200 {
            last = m.mhc_train_step(&x, &ys, 0.2, 3, LossMode::Sigmoid).unwrap();
        }
        assert!(last < first);
        assert!(m.mhc_train_step(&x, &ys, 0.2, 3, LossMode::Softmax).is_err());
    }

    proptest! {
        #[test]
        fn full_beam_matches_brute_force(seed in 0u64..5000) {
            let m = model(&[3, 4, 2], 24, 4, None, seed);
            let x = RngState::new(seed + 1).normal_vector(4, 1.0);
            let set = m.mhc_predict(&x, 24).unwrap();
            let oracle = PredictionSet::from_scores(&brute_force_scores(&m, &x), 24);
            prop_assert_eq!(set.labels, oracle.labels);
        }
    }
}
