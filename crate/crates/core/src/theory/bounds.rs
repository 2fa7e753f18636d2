//! Softmax perturbation bound for low-rank weights, and the grouped
//! (CP-style) sum of Kronecker outputs.

use crate::codec::kronecker_combine;
use crate::error::{MheError, Result};
use crate::linalg::matrix::{dot, DenseMatrix, DenseVector};
use crate::linalg::ops::softmax_slice;
use crate::linalg::RngState;

/// Measured deviation and the bound it is checked against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCheck {
    /// Mean over examples of `Σⱼ |softmax((W* + Δ) fᵢ)ⱼ − softmax(W* fᵢ)ⱼ|`.
    pub deviation: f64,
    /// `Σⱼ |exp(Δ̄ⱼ) − 1|` with `Δ̄ⱼ = maxᵢ |⟨Δⱼ, fᵢ⟩|`.
    pub bound: f64,
    pub holds: bool,
}

/// Compares the softmax deviation caused by perturbing `w_star` (`C × D`) by
/// `delta` against the bound, over the rows of `features` (`N × D`).
///
/// Each row's perturbation is aggregated as its largest effect on any
/// example, `Δ̄ⱼ = maxᵢ |⟨Δⱼ, fᵢ⟩|`, which makes the bound a property of the
/// dataset rather than of a single example.
pub fn theorem4_bound_check(
    w_star: &DenseMatrix,
    delta: &DenseMatrix,
    features: &DenseMatrix,
) -> Result<BoundCheck> {
    w_star.check_same_shape(delta)?;
    if features.cols() != w_star.cols() {
        return Err(MheError::shape(
            format!("features with {} columns", w_star.cols()),
            format!("{} columns", features.cols()),
        ));
    }
    if features.rows() == 0 {
        return Err(MheError::domain("the bound needs at least one example"));
    }
    let c = w_star.rows();
    let mut agg = vec![0.0f64; c];
    let mut deviation = 0.0;
    for i in 0..features.rows() {
        let f = features.row(i);
        let base: Vec<f64> = (0..c).map(|j| dot(w_star.row(j), f)).collect();
        let shift: Vec<f64> = (0..c).map(|j| dot(delta.row(j), f)).collect();
        let perturbed: Vec<f64> = base.iter().zip(&shift).map(|(a, b)| a + b).collect();
        let p = softmax_slice(&base, 1.0);
        let q = softmax_slice(&perturbed, 1.0);
        deviation += p.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum::<f64>();
        for (a, s) in agg.iter_mut().zip(&shift) {
            *a = a.max(s.abs());
        }
    }
    deviation /= features.rows() as f64;
    let bound: f64 = agg.iter().map(|d| d.exp_m1().abs()).sum();
    Ok(BoundCheck {
        deviation,
        bound,
        holds: deviation <= bound,
    })
}

/// Runs `trials` random instances (Gaussian `W*`, features, and `Δ` with
/// entries of standard deviation `scale`).
pub fn theorem4_monte_carlo(
    trials: usize,
    scale: f64,
    num_classes: usize,
    feature_dim: usize,
    num_examples: usize,
    seed: u64,
) -> Result<Vec<BoundCheck>> {
    let mut rng = RngState::new(seed);
    (0..trials)
        .map(|_| {
            let w = rng.normal_matrix(num_classes, feature_dim, 1.0);
            let d = rng.normal_matrix(num_classes, feature_dim, scale);
            let f = rng.normal_matrix(num_examples, feature_dim, 1.0 / (feature_dim as f64).sqrt());
            theorem4_bound_check(&w, &d, &f)
        })
        .collect()
}

/// `Σ_g kronecker_combine(group_g)`: a sum of `G` rank-one terms over the
/// global label space.
pub fn grouped_mhe_cp_output(groups: &[Vec<DenseVector>]) -> Result<DenseVector> {
    let first = groups
        .first()
        .ok_or_else(|| MheError::domain("at least one group is required"))?;
    let lengths: Vec<usize> = first.iter().map(DenseVector::len).collect();
    let mut total: Option<DenseVector> = None;
    for (g, group) in groups.iter().enumerate() {
        let these: Vec<usize> = group.iter().map(DenseVector::len).collect();
        if these != lengths {
            return Err(MheError::shape(
                format!("head lengths {lengths:?}"),
                format!("{these:?} in group {g}"),
            ));
        }
        let term = kronecker_combine(group)?;
        total = Some(match total {
            None => term,
            Some(mut acc) => {
                for (a, t) in acc.as_mut_slice().iter_mut().zip(term.as_slice()) {
                    *a += t;
                }
                acc
            }
        });
    }
    Ok(total.expect("groups is non-empty"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{one_hot, GlobalLabel};
    use proptest::prelude::{prop_assert, proptest};

    #[test]
    fn zero_perturbation() {
        let mut rng = RngState::new(1);
        let w = rng.normal_matrix(5, 4, 1.0);
        let f = rng.normal_matrix(7, 4, 1.0);
        let r = theorem4_bound_check(&w, &DenseMatrix::zeros(5, 4), &f).unwrap();
        assert_eq!(r.deviation, 0.0);
        assert_eq!(r.bound, 0.0);
        assert!(r.holds);
    }

    #[test]
    fn shape_errors() {
        let w = DenseMatrix::zeros(3, 2);
        assert!(theorem4_bound_check(&w, &DenseMatrix::zeros(3, 3), &DenseMatrix::zeros(1, 2)).is_err());
        assert!(theorem4_bound_check(&w, &w, &DenseMatrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn small_perturbations_hold() {
        let checks = theorem4_monte_carlo(100, 0.05, 10, 8, 20, 3).unwrap();
        assert!(checks.iter().all(|c| c.holds));
    }

    proptest! {
        #[test]
        fn doubling_delta_never_shrinks_the_bound(seed in 0u64..500) {
            let mut rng = RngState::new(seed);
            let w = rng.normal_matrix(4, 3, 1.0);
            let d = rng.normal_matrix(4, 3, 0.2);
            let f = rng.normal_matrix(6, 3, 1.0);
            let a = theorem4_bound_check(&w, &d, &f).unwrap();
            let b = theorem4_bound_check(&w, &d.scale(2.0), &f).unwrap();
            prop_assert!(b.bound >= a.bound);
            prop_assert!(a.holds && b.holds);
        }
    }

    #[test]
    fn one_group_is_the_kronecker_product() {
        let g = vec![DenseVector(vec![0.3, 0.7]), DenseVector(vec![0.8, 0.2])];
        assert_eq!(
            grouped_mhe_cp_output(std::slice::from_ref(&g)).unwrap(),
            kronecker_combine(&g).unwrap()
        );
    }

    #[test]
    fn two_one_hot_groups_give_two_hot() {
        let a = vec![one_hot(GlobalLabel::new(0), 2).unwrap(), one_hot(GlobalLabel::new(1), 3).unwrap()];
        let b = vec![one_hot(GlobalLabel::new(1), 2).unwrap(), one_hot(GlobalLabel::new(2), 3).unwrap()];
        let out = grouped_mhe_cp_output(&[a, b]).unwrap();
        assert_eq!(out.as_slice(), &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let short = vec![DenseVector(vec![1.0]), DenseVector(vec![1.0, 0.0, 0.0])];
        let long = vec![DenseVector(vec![1.0, 0.0]), DenseVector(vec![1.0, 0.0, 0.0])];
        assert!(matches!(grouped_mhe_cp_output(&[long, short]), Err(MheError::Shape { .. })));
    }

    #[test]
    fn rank_two_target_is_reconstructed() {
        let mut rng = RngState::new(8);
        let groups: Vec<Vec<DenseVector>> = (0..2)
            .map(|_| vec![rng.normal_vector(3, 1.0), rng.normal_vector(4, 1.0)])
            .collect();
        let target: Vec<f64> = (0..12)
            .map(|i| {
                groups
                    .iter()
                    .map(|g| g[0][i / 4] * g[1][i % 4])
                    .sum()
            })
            .collect();
        let out = grouped_mhe_cp_output(&groups).unwrap();
        for (a, b) in out.as_slice().iter().zip(&target) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
