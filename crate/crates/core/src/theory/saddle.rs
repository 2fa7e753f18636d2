//! Landscape probes for the Frobenius-loss bottleneck model: the closed-form
//! optimum, multi-restart consistency, perturb-and-redescend probing, and a
//! rank-1 cross-entropy accuracy witness.

use super::bottleneck::{BottleneckAdam, BottleneckModel, LossKind};
use crate::data::SparseDataset;
use crate::error::{MheError, Result};
use crate::linalg::matrix::DenseMatrix;
use crate::linalg::{svd, RngState};

/// Gradient-descent settings for Frobenius re-descents.
#[derive(Debug, Clone, Copy)]
pub struct DescentConfig {
    pub lr: f64,
    pub max_iters: usize,
    /// Stop once the full gradient norm falls below this.
    pub tolerance: f64,
}

impl Default for DescentConfig {
    fn default() -> Self {
        DescentConfig {
            lr: 0.05,
            max_iters: 200_000,
            tolerance: 1e-10,
        }
    }
}

/// Where a descent stopped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentResult {
    pub loss: f64,
    pub grad_norm: f64,
    pub iterations: usize,
}

/// Plain gradient descent on the Frobenius loss.
pub fn descend(
    model: &mut BottleneckModel,
    x: &DenseMatrix,
    labels: &[usize],
    cfg: &DescentConfig,
) -> Result<DescentResult> {
    let mut iterations = 0;
    loop {
        let (loss, grads) = model.loss_and_grads(x, labels, LossKind::Frobenius)?;
        let grad_norm = grads.norm();
        if !loss.is_finite() || !grad_norm.is_finite() {
            return Err(MheError::domain(format!(
                "descent diverged after {iterations} iterations; lower the learning rate"
            )));
        }
        if grad_norm < cfg.tolerance || iterations == cfg.max_iters {
            return Ok(DescentResult {
                loss,
                grad_norm,
                iterations,
            });
        }
        model.sgd(&grads, cfg.lr);
        iterations += 1;
    }
}

/// One-hot target matrix (`N × C`).
pub fn one_hot_targets(labels: &[usize], num_classes: usize) -> Result<DenseMatrix> {
    let mut y = DenseMatrix::zeros(labels.len(), num_classes);
    for (i, &l) in labels.iter().enumerate() {
        if l >= num_classes {
            return Err(MheError::Range {
                index: l,
                capacity: num_classes,
            });
        }
        y.row_mut(i)[l] = 1.0;
    }
    Ok(y)
}

/// Minimum of `½‖X A − Y‖²_F` over `D × C` matrices `A` of rank at most `r`.
///
/// With `P` the projector onto the column space of `X`, the optimum is
/// `½‖(I − P) Y‖² + ½ Σ_{i>r} σᵢ(P Y)²`.
pub fn truncated_projection_optimum(x: &DenseMatrix, y: &DenseMatrix, r: usize) -> Result<f64> {
    if x.rows() != y.rows() {
        return Err(MheError::shape(
            format!("{} target rows", x.rows()),
            format!("{} rows", y.rows()),
        ));
    }
    let dec = svd(x)?;
    let smax = dec.s.first().copied().unwrap_or(0.0);
    let keep: Vec<usize> = (0..dec.s.len())
        .filter(|&k| dec.s[k] > smax * 1e-12 * x.rows().max(x.cols()) as f64)
        .collect();
    let u = DenseMatrix::from_fn(x.rows(), keep.len(), |i, k| dec.u[(i, keep[k])]);
    let py = u.matmul(&u.transpose().matmul(y)?)?;
    let residual = y.sub(&py)?.frobenius_norm().powi(2);
    let tail: f64 = svd(&py)?.s.iter().skip(r).map(|s| s * s).sum();
    Ok(0.5 * (residual + tail))
}

/// Square orthogonal features and one-hot labels with class sizes
/// 6, 5, 4, 3, 2, so the target singular values are all distinct.
pub fn theorem2_toy(seed: u64) -> Result<(DenseMatrix, Vec<usize>)> {
    let counts = [6usize, 5, 4, 3, 2];
    let n: usize = counts.iter().sum();
    let g = RngState::new(seed).normal_matrix(n, n, 1.0);
    let dec = svd(&g)?;
    let q = dec.u.matmul(&dec.v.transpose())?;
    let labels = counts
        .iter()
        .enumerate()
        .flat_map(|(c, &k)| std::iter::repeat_n(c, k))
        .collect();
    Ok((q, labels))
}

/// Final Frobenius losses of `restarts` bias-free bottleneck models trained
/// from independent random initializations.
pub fn frobenius_restarts(
    x: &DenseMatrix,
    labels: &[usize],
    num_classes: usize,
    bottleneck_dim: usize,
    restarts: usize,
    seed: u64,
    cfg: &DescentConfig,
) -> Result<Vec<DescentResult>> {
    let rng = RngState::new(seed);
    (0..restarts)
        .map(|k| {
            let mut stream = rng.fork(k as u64);
            let mut model = BottleneckModel::new(x.cols(), bottleneck_dim, num_classes, false, &mut stream)?;
            descend(&mut model, x, labels, cfg)
        })
        .collect()
}

/// Outcome of perturbing a converged model and descending again.
#[derive(Debug, Clone, PartialEq)]
pub struct SaddleReport {
    pub base_loss: f64,
    /// Some perturbation already lowered the loss before re-descent.
    pub escape_found: bool,
    /// Loss after each re-descent.
    pub redescended: Vec<f64>,
    pub best_loss: f64,
}

impl SaddleReport {
    /// Largest minus smallest re-descended loss.
    pub fn spread(&self) -> f64 {
        let max = self.redescended.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = self.redescended.iter().copied().fold(f64::INFINITY, f64::min);
        if self.redescended.is_empty() {
            0.0
        } else {
            max - min
        }
    }
}

/// Perturbs a converged Frobenius model `trials` times by Gaussian noise of
/// standard deviation `scale`, re-descends each copy and reports the losses.
pub fn saddle_probe(
    model: &BottleneckModel,
    x: &DenseMatrix,
    labels: &[usize],
    scale: f64,
    trials: usize,
    seed: u64,
    cfg: &DescentConfig,
) -> Result<SaddleReport> {
    let (base_loss, grads) = model.loss_and_grads(x, labels, LossKind::Frobenius)?;
    let g = grads.norm();
    if g >= 1e-6 {
        return Err(MheError::Usage(format!(
            "saddle probe needs a converged model (gradient norm {g:.3e} is not below 1e-6)"
        )));
    }
    let mut rng = RngState::new(seed);
    let mut escape_found = false;
    let mut redescended = Vec::with_capacity(trials);
    for _ in 0..trials {
        let mut copy = model.clone();
        copy.perturb(scale, &mut rng);
        let (perturbed, _) = copy.loss_and_grads(x, labels, LossKind::Frobenius)?;
        escape_found |= perturbed < base_loss - 1e-12;
        redescended.push(descend(&mut copy, x, labels, cfg)?.loss);
    }
    let best_loss = redescended.iter().copied().fold(base_loss, f64::min);
    Ok(SaddleReport {
        base_loss,
        escape_found,
        redescended,
        best_loss,
    })
}

/// Train accuracies of a rank-1 bottleneck (with bias) and of an
/// unconstrained linear classifier, both trained with cross-entropy.
pub fn theorem3_witness(dataset: &SparseDataset, epochs: usize, lr: f64, seed: u64) -> Result<(f64, f64)> {
    let x = dataset.feature_matrix();
    let labels: Vec<usize> = dataset
        .examples
        .iter()
        .map(|e| {
            e.labels
                .first()
                .map(|l| l.index())
                .ok_or_else(|| MheError::domain("every example needs a label"))
        })
        .collect::<Result<_>>()?;
    let full_rank = dataset.num_features.min(dataset.num_labels);
    let mut accs = [0.0; 2];
    for (slot, r) in [1, full_rank].into_iter().enumerate() {
        let mut rng = RngState::new(seed);
        let mut model = BottleneckModel::new(dataset.num_features, r, dataset.num_labels, true, &mut rng)?;
        let mut adam = BottleneckAdam::new(&model);
        for epoch in 0..epochs {
            let (_, grads) = model.loss_and_grads(&x, &labels, LossKind::CrossEntropy)?;
            adam.step(&mut model, &grads, crate::linalg::cosine_lr(lr, epoch, epochs))?;
        }
        accs[slot] = model.accuracy(&x, &labels)?;
    }
    Ok((accs[0], accs[1]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_separable_toy;

    #[test]
    fn optimum_of_identity_features() {
        let x = DenseMatrix::identity(4);
        let y = one_hot_targets(&[0, 0, 1, 2], 3).unwrap();
        // Singular values of Y are √2, 1, 1.
        assert!((truncated_projection_optimum(&x, &y, 1).unwrap() - 1.0).abs() < 1e-12);
        assert!((truncated_projection_optimum(&x, &y, 3).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn optimum_counts_the_unreachable_part() {
        // X spans only the first coordinate.
        let x = DenseMatrix::from_rows(&[vec![1.0], vec![0.0]]).unwrap();
        let y = one_hot_targets(&[0, 1], 2).unwrap();
        assert!((truncated_projection_optimum(&x, &y, 1).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn full_bottleneck_matches_least_squares() {
        let (x, labels) = theorem2_toy(1).unwrap();
        let y = one_hot_targets(&labels, 5).unwrap();
        let opt = truncated_projection_optimum(&x, &y, 5).unwrap();
        let runs = frobenius_restarts(&x, &labels, 5, 5, 2, 3, &DescentConfig::default()).unwrap();
        for r in runs {
            assert!((r.loss - opt).abs() < 1e-3, "{} vs {opt}", r.loss);
        }
    }

    #[test]
    fn probe_requires_convergence() {
        let (x, labels) = theorem2_toy(2).unwrap();
        let model = BottleneckModel::new(20, 2, 5, false, &mut RngState::new(1)).unwrap();
        assert!(matches!(
            saddle_probe(&model, &x, &labels, 0.1, 1, 0, &DescentConfig::default()),
            Err(MheError::Usage(_))
        ));
    }

    #[test]
    fn zero_perturbation_keeps_the_loss() {
        let (x, labels) = theorem2_toy(2).unwrap();
        let mut model = BottleneckModel::new(20, 2, 5, false, &mut RngState::new(1)).unwrap();
        let cfg = DescentConfig::default();
        let done = descend(&mut model, &x, &labels, &cfg).unwrap();
        assert!(done.grad_norm < 1e-6);
        let report = saddle_probe(&model, &x, &labels, 0.0, 2, 0, &cfg).unwrap();
        assert!(!report.escape_found);
        assert!(report.redescended.iter().all(|l| (l - done.loss).abs() < 1e-12));
    }

    #[test]
    fn rank_one_softmax_matches_full_rank_accuracy() {
        let ds = gen_separable_toy(4, 8, 10.0, 5).unwrap();
        let (low, full) = theorem3_witness(&ds, 2000, 0.05, 1).unwrap();
        assert!((low - full).abs() * ds.len() as f64 <= 1.0 + 1e-9, "{low} vs {full}");
    }
}
