//! Epoch loops and evaluation over sparse datasets.

use super::{LossMode, MultiHeadModel};
use crate::codec::GlobalLabel;
use crate::data::{precision_at_k, MetricsReport, SparseDataset};
use crate::error::{MheError, Result};
use crate::linalg::{cosine_lr, DenseVector, RngState};
use crate::planner::Strategy;

/// Settings for [`train`].
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Decay the learning rate with a cosine schedule over the epochs.
    pub cosine: bool,
    pub seed: u64,
    /// `None` picks softmax for single-label data and sigmoid otherwise.
    pub loss: Option<LossMode>,
    /// Beam width used for cascade training.
    pub beam_width: usize,
    /// Heads evaluated per example by the sampling strategy.
    pub sample_heads: usize,
    /// Batch size for the sampling strategy and the batched baseline;
    /// product and cascade training is always per example.
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            lr: 0.1,
            cosine: false,
            seed: 0,
            loss: None,
            beam_width: 4,
            sample_heads: 1,
            batch_size: 1,
        }
    }
}

/// Summary of one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub mean_loss: f64,
    pub steps: usize,
}

/// Trains `model` on the labeled examples of `dataset`; unlabeled examples
/// are skipped. Example order is reshuffled every epoch from `cfg.seed`.
pub fn train(
    model: &mut MultiHeadModel,
    dataset: &SparseDataset,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<Vec<EpochStats>> {
    if dataset.num_features != model.input_dim() {
        return Err(MheError::shape(
            format!("{} features", model.input_dim()),
            format!("{} features in {}", dataset.num_features, dataset.name),
        ));
    }
    if dataset.num_labels > model.num_classes() {
        return Err(MheError::shape(
            format!("at most {} labels", model.num_classes()),
            format!("{} labels in {}", dataset.num_labels, dataset.name),
        ));
    }
    if cfg.batch_size == 0 {
        return Err(MheError::domain("batch size must be at least 1"));
    }
    let mode = cfg.loss.unwrap_or(if dataset.is_multi_label() {
        LossMode::Sigmoid
    } else {
        LossMode::Softmax
    });
    let mut order_rng = RngState::new(cfg.seed);
    let mut sample_rng = order_rng.fork(1);
    // Sampling and batched training see one (example, label) pair at a time.
    let pairs: Vec<(usize, GlobalLabel)> = dataset
        .examples
        .iter()
        .enumerate()
        .flat_map(|(i, e)| e.labels.iter().map(move |&y| (i, y)))
        .collect();
    let labeled: Vec<usize> = (0..dataset.len())
        .filter(|&i| !dataset.examples[i].is_unlabeled())
        .collect();
    let batched = model.strategy() == Strategy::Mhs
        || (model.strategy() == Strategy::Vanilla && cfg.batch_size > 1 && mode == LossMode::Softmax);

    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = if cfg.cosine {
            cosine_lr(cfg.lr, epoch, cfg.epochs)
        } else {
            cfg.lr
        };
        let mut total = 0.0;
        let mut steps = 0;
        if batched {
            let mut idx: Vec<usize> = (0..pairs.len()).collect();
            order_rng.shuffle(&mut idx);
            for chunk in idx.chunks(cfg.batch_size) {
                let xs: Vec<DenseVector> = chunk
                    .iter()
                    .map(|&p| dataset.examples[pairs[p].0].dense(dataset.num_features))
                    .collect();
                let ys: Vec<GlobalLabel> = chunk.iter().map(|&p| pairs[p].1).collect();
                total += match model.strategy() {
                    Strategy::Mhs => model.mhs_train_step(&xs, &ys, lr, cfg.sample_heads, &mut sample_rng)?,
                    _ => model.vanilla_train_batch(&xs, &ys, lr)?,
                };
                steps += 1;
            }
        } else {
            let mut idx = labeled.clone();
            order_rng.shuffle(&mut idx);
            for i in idx {
                let e = &dataset.examples[i];
                let x = e.dense(dataset.num_features);
                total += match model.strategy() {
                    Strategy::Mhc => {
                        let k = cfg.beam_width.min(model.num_classes());
                        model.mhc_train_step(&x, &e.labels, lr, k, mode)?
                    }
                    _ => model.product_step(&x, &e.labels, lr, mode)?.0,
                };
                steps += 1;
            }
        }
        let mean_loss = if steps == 0 { 0.0 } else { total / steps as f64 };
        if !mean_loss.is_finite() {
            return Err(MheError::domain(format!("training diverged at epoch {epoch} (loss {mean_loss})")));
        }
        let stats = EpochStats {
            epoch,
            lr,
            mean_loss,
            steps,
        };
        on_epoch(&stats);
        history.push(stats);
    }
    Ok(history)
}

/// Accuracy (top prediction is one of the true labels) and P@K for each
/// requested `K`, over the labeled examples.
pub fn evaluate(model: &MultiHeadModel, dataset: &SparseDataset, ks: &[usize]) -> Result<MetricsReport> {
    let kmax = ks.iter().copied().max().unwrap_or(1).max(1);
    let mut hits = 0usize;
    let mut precision = vec![0.0; ks.len()];
    let mut n = 0usize;
    for e in dataset.examples.iter().filter(|e| !e.is_unlabeled()) {
        let x = e.dense(dataset.num_features);
        let ranked = if kmax == 1 {
            vec![model.predict(&x)?]
        } else {
            model.predict_top_k(&x, kmax)?.labels
        };
        if e.labels.contains(&ranked[0]) {
            hits += 1;
        }
        for (p, &k) in precision.iter_mut().zip(ks) {
            *p += precision_at_k(&ranked, &e.labels, k)?;
        }
        n += 1;
    }
    if n == 0 {
        return Err(MheError::domain(format!("dataset {} has no labeled examples", dataset.name)));
    }
    let mut report = MetricsReport::new();
    report.push("examples", n as f64);
    report.push("accuracy", hits as f64 / n as f64);
    for (p, &k) in precision.iter().zip(ks) {
        report.push(format!("p@{k}"), p / n as f64);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::HeadPlan;
    use crate::data::gen_separable_toy;
    use crate::models::ModelConfig;

    fn fit(strategy: Strategy, plan: HeadPlan, cfg: TrainConfig) -> MetricsReport {
        let ds = gen_separable_toy(12, 6, 8.0, 1).unwrap();
        let mc = ModelConfig::new(strategy, plan, 12, 12).with_beam_width(3);
        let mut model = MultiHeadModel::new(mc, &mut RngState::new(2)).unwrap();
        let hist = train(&mut model, &ds, &cfg, |_| {}).unwrap_or_else(|e| panic!("{strategy}: {e}"));
        assert!(hist.last().unwrap().mean_loss < hist[0].mean_loss);
        evaluate(&model, &ds, &[1, 3]).unwrap()
    }

    #[test]
    fn every_strategy_fits_the_toy() {
        let cfg = TrainConfig {
            epochs: 30,
            lr: 0.03,
            sample_heads: 2,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let cases = [
            (Strategy::Vanilla, HeadPlan::new(vec![12]).unwrap()),
            (Strategy::Mhp, HeadPlan::new(vec![4, 3]).unwrap()),
            (Strategy::Mhc, HeadPlan::new(vec![4, 3]).unwrap()),
            (Strategy::Mhs, HeadPlan::partition(vec![4, 4, 4]).unwrap()),
        ];
        for (strategy, plan) in cases {
            let report = fit(strategy, plan, cfg.clone());
            assert_eq!(report.get("accuracy"), Some(1.0), "{strategy}");
            assert!(report.get("p@3").unwrap() > 0.33 - 1e-12, "{strategy}");
        }
    }

    #[test]
    fn training_is_reproducible() {
        let cfg = TrainConfig {
            epochs: 3,
            cosine: true,
            ..TrainConfig::default()
        };
        let a = fit(Strategy::Mhp, HeadPlan::new(vec![4, 3]).unwrap(), cfg.clone());
        let b = fit(Strategy::Mhp, HeadPlan::new(vec![4, 3]).unwrap(), cfg);
        assert_eq!(a, b);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let ds = gen_separable_toy(4, 2, 8.0, 1).unwrap();
        let mc = ModelConfig::new(Strategy::Mhp, HeadPlan::new(vec![2, 2]).unwrap(), 4, 5);
        let mut model = MultiHeadModel::zeros(mc).unwrap();
        assert!(train(&mut model, &ds, &TrainConfig::default(), |_| {}).is_err());
    }
}
