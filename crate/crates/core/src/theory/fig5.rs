//! Rank-1 bottleneck trained on random Gaussian data with one example per
//! class: cross-entropy training can still fit every example because the
//! softmax output is not confined to the low rank of the logits, while the
//! Frobenius loss stays stuck.

use std::fmt;

use super::bottleneck::{BottleneckAdam, BottleneckModel, LossKind};
use crate::data::gen_gaussian_classification;
use crate::error::{MheError, Result};
use crate::linalg::{cosine_lr, numerical_rank, RngState, DEFAULT_RANK_TOLERANCE};

/// Optimizer used for the full-batch runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimizer {
    Sgd,
    Adam,
}

impl std::str::FromStr for Optimizer {
    type Err = MheError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(Optimizer::Sgd),
            "adam" => Ok(Optimizer::Adam),
            other => Err(MheError::Usage(format!("unknown optimizer '{other}' (expected sgd or adam)"))),
        }
    }
}

/// Experiment settings. The defaults are the configuration the acceptance
/// suite runs: Adam with a cosine-decayed rate of 0.3 over 30000 epochs.
#[derive(Debug, Clone)]
pub struct Fig5Config {
    pub num_examples: usize,
    pub feature_dim: usize,
    pub num_classes: usize,
    pub bottleneck_dim: usize,
    pub epochs: usize,
    pub lr: f64,
    pub cosine: bool,
    pub optimizer: Optimizer,
    /// Record a trajectory point every `record_every` epochs (plus the last).
    pub record_every: usize,
}

impl Default for Fig5Config {
    fn default() -> Self {
        Fig5Config {
            num_examples: 100,
            feature_dim: 100,
            num_classes: 100,
            bottleneck_dim: 1,
            epochs: 30_000,
            lr: 0.3,
            cosine: true,
            optimizer: Optimizer::Adam,
            record_every: 1000,
        }
    }
}

/// State of the run at one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub epoch: usize,
    pub accuracy: f64,
    /// Numerical rank of the `N × C` softmax output matrix.
    pub rank: usize,
}

/// Recorded points; `epoch` is the number of updates applied so far.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
}

impl Trajectory {
    pub fn first(&self) -> Option<&TrajectoryPoint> {
        self.points.first()
    }

    pub fn last(&self) -> Option<&TrajectoryPoint> {
        self.points.last()
    }
}

impl fmt::Display for Trajectory {
    /// Tab-separated `epoch accuracy rank` table with a header row.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "epoch\taccuracy\trank")?;
        for p in &self.points {
            writeln!(f, "{}\t{}\t{}", p.epoch, p.accuracy, p.rank)?;
        }
        Ok(())
    }
}

/// Trains the bottleneck model full-batch on `gen_gaussian_classification`
/// data from `seed` and records accuracy and softmax-output rank.
pub fn run_fig5_experiment(kind: LossKind, config: &Fig5Config, seed: u64) -> Result<Trajectory> {
    if config.record_every == 0 {
        return Err(MheError::domain("record_every must be at least 1"));
    }
    let ds = gen_gaussian_classification(config.num_examples, config.feature_dim, config.num_classes, seed)?;
    let x = ds.feature_matrix();
    let labels: Vec<usize> = ds.examples.iter().map(|e| e.labels[0].index()).collect();
    let mut rng = RngState::new(seed).fork(1);
    let mut model = BottleneckModel::new(
        config.feature_dim,
        config.bottleneck_dim,
        config.num_classes,
        true,
        &mut rng,
    )?;
    let mut adam = BottleneckAdam::new(&model);

    let record = |model: &BottleneckModel, epoch: usize| -> Result<TrajectoryPoint> {
        let probs = model.softmax_outputs(&x)?;
        Ok(TrajectoryPoint {
            epoch,
            accuracy: model.accuracy(&x, &labels)?,
            rank: numerical_rank(&probs, DEFAULT_RANK_TOLERANCE),
        })
    };

    let mut trajectory = Trajectory::default();
    for epoch in 0..config.epochs {
        if epoch % config.record_every == 0 {
            trajectory.points.push(record(&model, epoch)?);
        }
        let lr = if config.cosine {
            cosine_lr(config.lr, epoch, config.epochs)
        } else {
            config.lr
        };
        let (loss, grads) = model.loss_and_grads(&x, &labels, kind)?;
        if !loss.is_finite() {
            return Err(MheError::domain(format!("{kind} run diverged at epoch {epoch}")));
        }
        match config.optimizer {
            Optimizer::Sgd => model.sgd(&grads, lr),
            Optimizer::Adam => adam.step(&mut model, &grads, lr)?,
        }
    }
    trajectory.points.push(record(&model, config.epochs)?);
    Ok(trajectory)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(epochs: usize) -> Fig5Config {
        Fig5Config {
            num_examples: 20,
            feature_dim: 20,
            num_classes: 20,
            epochs,
            record_every: 100,
            ..Fig5Config::default()
        }
    }

    #[test]
    fn cross_entropy_fits_a_small_problem() {
        let t = run_fig5_experiment(LossKind::CrossEntropy, &small(3000), 1).unwrap();
        let (first, last) = (t.first().unwrap(), t.last().unwrap());
        assert!(last.accuracy >= 0.95, "{t}");
        assert!(last.rank > first.rank);
        assert_eq!(last.epoch, 3000);
    }

    #[test]
    fn frobenius_stays_low() {
        let t = run_fig5_experiment(LossKind::Frobenius, &small(3000), 1).unwrap();
        assert!(t.last().unwrap().accuracy <= 0.3, "{t}");
    }

    #[test]
    fn trajectory_table_format() {
        let t = Trajectory {
            points: vec![TrajectoryPoint {
                epoch: 0,
                accuracy: 0.5,
                rank: 3,
            }],
        };
        assert_eq!(t.to_string(), "epoch\taccuracy\trank\n0\t0.5\t3\n");
    }

    #[test]
    fn runs_are_deterministic() {
        let a = run_fig5_experiment(LossKind::CrossEntropy, &small(50), 3).unwrap();
        let b = run_fig5_experiment(LossKind::CrossEntropy, &small(50), 3).unwrap();
        assert_eq!(a, b);
    }
}
