//! Forward maps and losses with their analytic gradients.

use super::matrix::{DenseMatrix, DenseVector};
use crate::codec::GlobalLabel;
use crate::error::{MheError, Result};

/// `W x + b`.
pub fn affine(w: &DenseMatrix, x: &DenseVector, b: Option<&DenseVector>) -> Result<DenseVector> {
    if w.cols() != x.len() {
        return Err(MheError::shape(
            format!("input of length {} for a {}x{} matrix", w.cols(), w.rows(), w.cols()),
            format!("length {}", x.len()),
        ));
    }
    let mut out = w.matvec(x.as_slice())?;
    if let Some(b) = b {
        if b.len() != w.rows() {
            return Err(MheError::shape(
                format!("bias of length {}", w.rows()),
                format!("length {}", b.len()),
            ));
        }
        for (o, bi) in out.as_mut_slice().iter_mut().zip(b.as_slice()) {
            *o += bi;
        }
    }
    Ok(out)
}

/// Temperature softmax with max subtraction.
pub fn softmax(o: &DenseVector, temperature: f64) -> Result<DenseVector> {
    if temperature.is_nan() || temperature <= 0.0 {
        return Err(MheError::domain(format!(
            "softmax temperature must be positive, got {temperature}"
        )));
    }
    Ok(DenseVector(softmax_slice(o.as_slice(), temperature)))
}

pub(crate) fn softmax_slice(o: &[f64], temperature: f64) -> Vec<f64> {
    if o.is_empty() {
        return Vec::new();
    }
    let max = o.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = o.iter().map(|v| ((v - max) / temperature).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    out
}

fn log_sum_exp(o: &[f64]) -> f64 {
    let max = o.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + o.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Softmax cross-entropy against a single class.
///
/// Returns `-log softmax(logits)[target]` and its gradient `softmax(logits) - onehot(target)`.
pub fn cross_entropy_loss(logits: &DenseVector, target: GlobalLabel) -> Result<(f64, DenseVector)> {
    let (loss, grad) = cross_entropy_slice(logits.as_slice(), target.index())?;
    Ok((loss, DenseVector(grad)))
}

pub(crate) fn cross_entropy_slice(logits: &[f64], target: usize) -> Result<(f64, Vec<f64>)> {
    if target >= logits.len() {
        return Err(MheError::Range {
            index: target,
            capacity: logits.len(),
        });
    }
    let lse = log_sum_exp(logits);
    let loss = lse - logits[target];
    let mut grad = softmax_slice(logits, 1.0);
    grad[target] -= 1.0;
    Ok((loss, grad))
}

/// Mean binary cross-entropy over sigmoid outputs, in the fused
/// `max(z, 0) - z t + ln(1 + e^{-|z|})` form.
pub fn bce_with_sigmoid_loss(
    logits: &DenseVector,
    targets: &DenseVector,
) -> Result<(f64, DenseVector)> {
    let (loss, grad) = bce_slice(logits.as_slice(), targets.as_slice())?;
    Ok((loss, DenseVector(grad)))
}

pub(crate) fn bce_slice(logits: &[f64], targets: &[f64]) -> Result<(f64, Vec<f64>)> {
    if logits.len() != targets.len() {
        return Err(MheError::shape(
            format!("{} targets", logits.len()),
            format!("{} targets", targets.len()),
        ));
    }
    if let Some(t) = targets.iter().find(|&&t| t != 0.0 && t != 1.0) {
        return Err(MheError::domain(format!(
            "binary targets must be 0 or 1, got {t}"
        )));
    }
    let n = logits.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (&z, &t) in logits.iter().zip(targets) {
        loss += z.max(0.0) - z * t + (-z.abs()).exp().ln_1p();
        grad.push((sigmoid(z) - t) / n);
    }
    Ok((loss / n, grad))
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `½‖prediction − target‖²_F` and its gradient `prediction − target`.
pub fn frobenius_loss(
    prediction: &DenseMatrix,
    target: &DenseMatrix,
) -> Result<(f64, DenseMatrix)> {
    let diff = prediction.sub(target)?;
    let loss = 0.5 * diff.as_slice().iter().map(|v| v * v).sum::<f64>();
    Ok((loss, diff))
}
