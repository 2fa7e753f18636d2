//! One-sided Jacobi singular value decomposition.
//!
//! At the sizes used here (a few hundred rows at most) the Hestenes variant is
//! simple and has good relative accuracy for small singular values, which is
//! what numerical rank measurements depend on.

use super::matrix::DenseMatrix;
use crate::error::{MheError, Result};

const MAX_SWEEPS: usize = 80;

/// Thin SVD `A = U diag(s) Vᵀ` with singular values in descending order.
#[derive(Debug, Clone)]
pub struct Svd {
    /// `m x k`, orthonormal columns.
    pub u: DenseMatrix,
    pub s: Vec<f64>,
    /// `n x k`, orthonormal columns.
    pub v: DenseMatrix,
}

impl Svd {
    /// Best rank-`r` approximation `U_r diag(s_r) V_rᵀ`.
    pub fn truncated(&self, r: usize) -> DenseMatrix {
        let r = r.min(self.s.len());
        let m = self.u.rows();
        let n = self.v.rows();
        DenseMatrix::from_fn(m, n, |i, j| {
            (0..r)
                .map(|k| self.u[(i, k)] * self.s[k] * self.v[(j, k)])
                .sum()
        })
    }
}

/// Jacobi rotations over the columns of `cols` (each of length `m`); returns the
/// accumulated right rotation as columns as well.
fn hestenes(cols: &mut [Vec<f64>]) -> Vec<Vec<f64>> {
    let n = cols.len();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            e
        })
        .collect();
    let eps = f64::EPSILON;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (alpha, beta, gamma) = {
                    let a = &cols[p];
                    let b = &cols[q];
                    let mut alpha = 0.0;
                    let mut beta = 0.0;
                    let mut gamma = 0.0;
                    for (x, y) in a.iter().zip(b) {
                        alpha += x * x;
                        beta += y * y;
                        gamma += x * y;
                    }
                    (alpha, beta, gamma)
                };
                if gamma == 0.0 || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(cols, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    v
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (left, right) = cols.split_at_mut(q);
    let a = &mut left[p];
    let b = &mut right[0];
    for (x, y) in a.iter_mut().zip(b.iter_mut()) {
        let xp = *x;
        let yq = *y;
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}

/// Computes the thin SVD of `a`.
pub fn svd(a: &DenseMatrix) -> Result<Svd> {
    if !a.is_finite() {
        return Err(MheError::domain("svd input contains non-finite values"));
    }
    let (m, n) = a.shape();
    // Work on whichever orientation has fewer columns.
    let transposed = m < n;
    let work = if transposed { a.transpose() } else { a.clone() };
    let (wm, wn) = work.shape();
    let mut cols: Vec<Vec<f64>> = (0..wn).map(|j| work.column(j)).collect();
    let v = hestenes(&mut cols);

    let mut order: Vec<(usize, f64)> = cols
        .iter()
        .enumerate()
        .map(|(j, c)| (j, c.iter().map(|x| x * x).sum::<f64>().sqrt()))
        .collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    let k = wn;
    let mut u = DenseMatrix::zeros(wm, k);
    let mut vm = DenseMatrix::zeros(wn, k);
    let mut s = Vec::with_capacity(k);
    for (out_j, &(j, sigma)) in order.iter().enumerate() {
        s.push(sigma);
        for i in 0..wm {
            u[(i, out_j)] = if sigma > 0.0 { cols[j][i] / sigma } else { 0.0 };
        }
        for i in 0..wn {
            vm[(i, out_j)] = v[j][i];
        }
    }
    Ok(if transposed {
        Svd { u: vm, s, v: u }
    } else {
        Svd { u, s, v: vm }
    })
}

/// Singular values in descending order.
pub fn singular_values(a: &DenseMatrix) -> Result<Vec<f64>> {
    let (m, n) = a.shape();
    let work = if m < n { a.transpose() } else { a.clone() };
    if !work.is_finite() {
        return Err(MheError::domain("svd input contains non-finite values"));
    }
    let mut cols: Vec<Vec<f64>> = (0..work.cols()).map(|j| work.column(j)).collect();
    hestenes(&mut cols);
    let mut s: Vec<f64> = cols
        .iter()
        .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

/// Number of singular values above `rel_tolerance` times the largest one.
///
/// Non-finite input has no meaningful rank; it is reported as 0.
pub fn numerical_rank(m: &DenseMatrix, rel_tolerance: f64) -> usize {
    let Ok(s) = singular_values(m) else {
        return 0;
    };
    let Some(&top) = s.first() else {
        return 0;
    };
    if top == 0.0 {
        return 0;
    }
    s.iter().filter(|&&v| v > rel_tolerance * top).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::rng::RngState;

    #[test]
    fn rank_of_identity() {
        for n in [1, 2, 7, 20] {
            assert_eq!(numerical_rank(&DenseMatrix::identity(n), 1e-8), n);
        }
    }

    #[test]
    fn rank_of_outer_product() {
        let u = [1.0, -2.0, 3.0, 0.5];
        let v = [2.0, 1.0, -1.0];
        let m = DenseMatrix::from_fn(4, 3, |i, j| u[i] * v[j]);
        assert_eq!(numerical_rank(&m, 1e-8), 1);
        assert_eq!(numerical_rank(&m.transpose(), 1e-8), 1);
    }

    #[test]
    fn rank_with_duplicated_rows() {
        let mut rng = RngState::new(11);
        let mut m = rng.normal_matrix(20, 20, 1.0);
        for i in 0..5 {
            let src = m.row(i).to_vec();
            m.row_mut(15 + i).copy_from_slice(&src);
        }
        let r = numerical_rank(&m, 1e-8);
        assert!(r <= 15, "rank {r}");
        assert_eq!(r, 15);
    }

    #[test]
    fn zero_matrix_has_rank_zero() {
        assert_eq!(numerical_rank(&DenseMatrix::zeros(3, 5), 1e-8), 0);
    }

    #[test]
    fn reconstruction_is_exact_at_full_rank() {
        let mut rng = RngState::new(5);
        for (m, n) in [(6, 4), (4, 6), (5, 5)] {
            let a = rng.normal_matrix(m, n, 1.0);
            let d = svd(&a).unwrap();
            let back = d.truncated(m.min(n));
            for (x, y) in a.as_slice().iter().zip(back.as_slice()) {
                assert!((x - y).abs() < 1e-12);
            }
            assert!(d.s.windows(2).all(|w| w[0] >= w[1]));
        }
    }
}
