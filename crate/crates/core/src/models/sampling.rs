//! Sampling strategy (MHS): heads partition the label space into contiguous
//! ranges, and each training example only evaluates its positive head plus a
//! few negative heads. With every head selected the update is exactly the
//! one-hot classifier's batch update.

use super::{Gradients, MultiHeadModel};
use crate::codec::GlobalLabel;
use crate::error::{MheError, Result};
use crate::linalg::matrix::{argmax, DenseVector};
use crate::linalg::ops::cross_entropy_slice;
use crate::linalg::RngState;
use crate::planner::Strategy;

impl MultiHeadModel {
    /// First label owned by each head.
    fn head_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.heads.len());
        let mut acc = 0;
        for &l in self.plan.lengths() {
            offsets.push(acc);
            acc += l;
        }
        offsets
    }

    /// Head owning `y` and the label's index inside it.
    pub fn mhs_locate(&self, y: GlobalLabel) -> Result<(usize, usize)> {
        self.expect_strategy(&[Strategy::Mhs, Strategy::Vanilla], "mhs_locate")?;
        self.check_label(y)?;
        let offsets = self.head_offsets();
        let head = offsets.partition_point(|&o| o <= y.index()) - 1;
        Ok((head, y.index() - offsets[head]))
    }

    /// Heads evaluated for each example of a batch.
    ///
    /// Negatives come first from heads owning other labels of the batch and
    /// are topped up uniformly from the remaining heads. The result for each
    /// example is sorted ascending.
    pub fn mhs_select_heads(
        &self,
        labels: &[GlobalLabel],
        sample_heads: usize,
        rng: &mut RngState,
    ) -> Result<Vec<Vec<usize>>> {
        let h = self.heads.len();
        if sample_heads == 0 || sample_heads > h {
            return Err(MheError::domain(format!(
                "sampled head count must be in 1..={h}, got {sample_heads}"
            )));
        }
        let positives = labels
            .iter()
            .map(|&y| self.mhs_locate(y).map(|(head, _)| head))
            .collect::<Result<Vec<_>>>()?;
        if sample_heads == h {
            return Ok(vec![(0..h).collect(); labels.len()]);
        }
        let mut batch_heads = positives.clone();
        batch_heads.sort_unstable();
        batch_heads.dedup();

        let mut out = Vec::with_capacity(labels.len());
        for &pos in &positives {
            let mut negatives: Vec<usize> = batch_heads.iter().copied().filter(|&j| j != pos).collect();
            rng.shuffle(&mut negatives);
            negatives.truncate(sample_heads - 1);
            if negatives.len() < sample_heads - 1 {
                let mut rest: Vec<usize> = (0..h)
                    .filter(|&j| j != pos && !negatives.contains(&j))
                    .collect();
                rng.shuffle(&mut rest);
                negatives.extend(rest.into_iter().take(sample_heads - 1 - negatives.len()));
            }
            negatives.push(pos);
            negatives.sort_unstable();
            out.push(negatives);
        }
        Ok(out)
    }

    /// Mean cross-entropy and its gradients over a batch, each example
    /// scored on the concatenation of its selected heads in head order.
    pub(crate) fn selected_batch_gradients(
        &self,
        xs: &[DenseVector],
        labels: &[GlobalLabel],
        selected: &[Vec<usize>],
    ) -> Result<(f64, Gradients)> {
        if xs.is_empty() || xs.len() != labels.len() {
            return Err(MheError::shape(
                format!("{} labels for a non-empty batch", xs.len()),
                format!("{} labels", labels.len()),
            ));
        }
        let scale = 1.0 / xs.len() as f64;
        let mut grads = Gradients::empty(self);
        let mut total = 0.0;
        for ((x, &y), heads) in xs.iter().zip(labels).zip(selected) {
            let (pos, local) = self.mhs_locate(y)?;
            let f = self.backbone.forward(x.as_slice())?;
            let mut logits = Vec::new();
            let mut target = 0;
            for &j in heads {
                if j == pos {
                    target = logits.len() + local;
                }
                logits.extend(self.heads[j].logits(&f));
            }
            let (loss, g) = cross_entropy_slice(&logits, target)?;
            total += loss;
            let g: Vec<f64> = g.into_iter().map(|v| v * scale).collect();

            let mut df = vec![0.0; f.len()];
            let mut offset = 0;
            for &j in heads {
                let width = self.heads[j].width();
                let gj = &g[offset..offset + width];
                self.heads[j].accumulate_input_grad(gj, &mut df);
                grads.add_head(j, gj, &f);
                offset += width;
            }
            if self.backbone.is_linear() {
                grads.backbone.push((df, x.as_slice().to_vec()));
            }
        }
        Ok((total * scale, grads))
    }

    /// Loss and gradients of one sampled batch.
    pub fn mhs_gradients(
        &self,
        xs: &[DenseVector],
        labels: &[GlobalLabel],
        sample_heads: usize,
        rng: &mut RngState,
    ) -> Result<(f64, Gradients)> {
        self.expect_strategy(&[Strategy::Mhs], "mhs_train_step")?;
        let selected = self.mhs_select_heads(labels, sample_heads, rng)?;
        self.selected_batch_gradients(xs, labels, &selected)
    }

    /// One SGD step on a batch, evaluating `sample_heads` heads per example.
    pub fn mhs_train_step(
        &mut self,
        xs: &[DenseVector],
        labels: &[GlobalLabel],
        lr: f64,
        sample_heads: usize,
        rng: &mut RngState,
    ) -> Result<f64> {
        let (loss, grads) = self.mhs_gradients(xs, labels, sample_heads, rng)?;
        self.apply_gradients(&grads, lr);
        Ok(loss)
    }

    /// Mini-batch SGD step of the one-hot classifier with mean cross-entropy.
    pub fn vanilla_train_batch(
        &mut self,
        xs: &[DenseVector],
        labels: &[GlobalLabel],
        lr: f64,
    ) -> Result<f64> {
        self.expect_strategy(&[Strategy::Vanilla], "vanilla_train_batch")?;
        let selected = vec![vec![0]; labels.len()];
        let (loss, grads) = self.selected_batch_gradients(xs, labels, &selected)?;
        self.apply_gradients(&grads, lr);
        Ok(loss)
    }

    /// Argmax over every head's logits, mapped back to the global label.
    pub fn mhs_predict(&self, x: &DenseVector) -> Result<GlobalLabel> {
        self.expect_strategy(&[Strategy::Mhs], "mhs_predict")?;
        let logits: Vec<f64> = self.forward_heads(x)?.into_iter().flat_map(|v| v.0).collect();
        argmax(&logits)
            .map(GlobalLabel::new)
            .ok_or_else(|| MheError::domain("model has no outputs"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::HeadPlan;
    use crate::models::ModelConfig;

    fn pair(c: usize, lengths: &[usize], d: usize, hidden: usize, seed: u64) -> (MultiHeadModel, MultiHeadModel) {
        let mhs = ModelConfig::new(Strategy::Mhs, HeadPlan::partition(lengths.to_vec()).unwrap(), c, d)
            .with_feature_dim(hidden);
        let van = ModelConfig::new(Strategy::Vanilla, HeadPlan::new(vec![c]).unwrap(), c, d)
            .with_feature_dim(hidden);
        (
            MultiHeadModel::new(mhs, &mut RngState::new(seed)).unwrap(),
            MultiHeadModel::new(van, &mut RngState::new(seed)).unwrap(),
        )
    }

    fn batch(rng: &mut RngState, n: usize, d: usize, c: usize) -> (Vec<DenseVector>, Vec<GlobalLabel>) {
        let xs = (0..n).map(|_| rng.normal_vector(d, 1.0)).collect();
        let ys = (0..n).map(|_| GlobalLabel::new(rng.below(c))).collect();
        (xs, ys)
    }

    fn bits(m: &MultiHeadModel) -> Vec<u64> {
        let mut out = Vec::new();
        if let crate::models::Backbone::Linear(b) = m.backbone() {
            out.extend(b.as_slice().iter().map(|v| v.to_bits()));
        }
        for h in m.heads() {
            out.extend(h.weight.as_slice().iter().map(|v| v.to_bits()));
        }
        for h in m.heads() {
            out.extend(h.bias.as_slice().iter().map(|v| v.to_bits()));
        }
        out
    }

    #[test]
    fn locate_walks_contiguous_ranges() {
        let (m, _) = pair(10, &[4, 3, 3], 2, 2, 0);
        let located: Vec<(usize, usize)> = (0..10).map(|y| m.mhs_locate(GlobalLabel::new(y)).unwrap()).collect();
        assert_eq!(located[0], (0, 0));
        assert_eq!(located[3], (0, 3));
        assert_eq!(located[4], (1, 0));
        assert_eq!(located[9], (2, 2));
        assert!(m.mhs_locate(GlobalLabel::new(10)).is_err());
    }

    #[test]
    fn all_heads_matches_vanilla_bit_for_bit() {
        let (mut mhs, mut van) = pair(12, &[4, 4, 4], 5, 6, 11);
        assert_eq!(bits(&mhs), bits(&van));
        let mut data = RngState::new(5);
        let mut sampler = RngState::new(6);
        for _ in 0..20 {
            let (xs, ys) = batch(&mut data, 8, 5, 12);
            let a = mhs.mhs_train_step(&xs, &ys, 0.3, 3, &mut sampler).unwrap();
            let b = van.vanilla_train_batch(&xs, &ys, 0.3).unwrap();
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(bits(&mhs), bits(&van));
    }

    #[test]
    fn single_head_only_touches_positive_heads() {
        let (mut m, _) = pair(12, &[4, 4, 4], 5, 6, 2);
        let before = m.clone();
        let mut rng = RngState::new(1);
        let xs = vec![rng.normal_vector(5, 1.0), rng.normal_vector(5, 1.0)];
        let ys = vec![GlobalLabel::new(1), GlobalLabel::new(2)];
        m.mhs_train_step(&xs, &ys, 0.1, 1, &mut rng).unwrap();
        assert_ne!(m.heads()[0], before.heads()[0]);
        assert_eq!(m.heads()[1], before.heads()[1]);
        assert_eq!(m.heads()[2], before.heads()[2]);
    }

    #[test]
    fn selection_prefers_batch_heads() {
        let (m, _) = pair(20, &[4, 4, 4, 4, 4], 2, 2, 0);
        let mut rng = RngState::new(9);
        let ys = [0, 5, 9].map(GlobalLabel::new);
        let sel = m.mhs_select_heads(&ys, 3, &mut rng).unwrap();
        assert_eq!(sel[0], vec![0, 1, 2]);
        assert_eq!(sel[1], vec![0, 1, 2]);
        let sel = m.mhs_select_heads(&ys, 4, &mut rng).unwrap();
        for (s, pos) in sel.iter().zip([0, 1, 2]) {
            assert_eq!(s.len(), 4);
            assert!(s.contains(&pos));
            assert!([0, 1, 2].iter().all(|j| s.contains(j)));
        }
        assert!(m.mhs_select_heads(&ys, 0, &mut rng).is_err());
        assert!(m.mhs_select_heads(&ys, 6, &mut rng).is_err());
    }

    #[test]
    fn sampled_training_learns_separable_data() {
        let (mut m, _) = pair(8, &[3, 3, 2], 8, 8, 4);
        let mut rng = RngState::new(3);
        let xs: Vec<DenseVector> = (0..8)
            .map(|i| DenseVector((0..8).map(|j| if i == j { 3.0 } else { 0.0 }).collect()))
            .collect();
        let ys: Vec<GlobalLabel> = (0..8).map(GlobalLabel::new).collect();
        for _ in 0..300 {
            m.mhs_train_step(&xs, &ys, 0.5, 2, &mut rng).unwrap();
        }
        for (x, y) in xs.iter().zip(&ys) {
            assert_eq!(m.mhs_predict(x).unwrap(), *y);
        }
    }
}
