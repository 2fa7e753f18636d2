use std::f64::consts::PI;

use super::matrix::DenseMatrix;
use crate::error::{MheError, Result};

/// `params − lr · grad`.
pub fn sgd_step(params: &DenseMatrix, grad: &DenseMatrix, lr: f64) -> Result<DenseMatrix> {
    params.check_same_shape(grad)?;
    let mut out = params.clone();
    sgd_update(out.as_mut_slice(), grad.as_slice(), lr);
    Ok(out)
}

/// In-place SGD update on flat buffers of equal length.
pub(crate) fn sgd_update(params: &mut [f64], grad: &[f64], lr: f64) {
    debug_assert_eq!(params.len(), grad.len());
    for (p, g) in params.iter_mut().zip(grad) {
        *p -= lr * g;
    }
}

/// Cosine-decayed learning rate at `step` of `total`.
pub fn cosine_lr(base: f64, step: usize, total: usize) -> f64 {
    if total == 0 {
        return base;
    }
    base * 0.5 * (1.0 + (PI * step as f64 / total as f64).cos())
}

/// Adam moment buffers for one flat parameter block.
#[derive(Debug, Clone)]
pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(len: usize) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(MheError::shape(
                format!("{} parameters", self.m.len()),
                format!("{} parameters / {} gradients", params.len(), grad.len()),
            ));
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= lr * mh / (vh.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_grad_leaves_params() {
        let p = DenseMatrix::from_fn(2, 3, |i, j| (i * 3 + j) as f64);
        let out = sgd_step(&p, &DenseMatrix::zeros(2, 3), 0.7).unwrap();
        assert_eq!(out, p);
    }

    #[test]
    fn unit_step_from_zero() {
        let out = sgd_step(&DenseMatrix::zeros(2, 2), &DenseMatrix::filled(2, 2, 1.0), 0.1).unwrap();
        assert!(out.as_slice().iter().all(|&v| v == -0.1));
    }

    #[test]
    fn two_half_steps_equal_one_step() {
        let p = DenseMatrix::from_fn(3, 2, |i, j| i as f64 - j as f64 * 0.5);
        let g = DenseMatrix::from_fn(3, 2, |i, j| 0.25 * (i + j) as f64);
        let two = sgd_step(&sgd_step(&p, &g, 0.05).unwrap(), &g, 0.05).unwrap();
        let one = sgd_step(&p, &g, 0.1).unwrap();
        for (a, b) in two.as_slice().iter().zip(one.as_slice()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn shape_mismatch() {
        assert!(sgd_step(&DenseMatrix::zeros(2, 2), &DenseMatrix::zeros(2, 1), 0.1).is_err());
    }

    #[test]
    fn cosine_endpoints() {
        assert_eq!(cosine_lr(0.5, 0, 100), 0.5);
        assert!(cosine_lr(0.5, 100, 100).abs() < 1e-15);
        assert!((cosine_lr(0.5, 50, 100) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut p = vec![3.0, -2.0];
        let mut opt = Adam::new(2);
        for _ in 0..2000 {
            let g = p.clone();
            opt.step(&mut p, &g, 0.05).unwrap();
        }
        assert!(p.iter().all(|v| v.abs() < 1e-3));
    }
}
