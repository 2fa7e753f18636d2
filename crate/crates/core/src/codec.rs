//! Mixed-radix label codec.
//!
//! A [`HeadPlan`] with lengths `[L1, L2, ..., LH]` is a radix system in which
//! head 1 is the most significant digit. A global label `y` maps to the digits
//! `(y1, ..., yH)` with
//!
//! ```text
//! y = y1·(L2···LH) + y2·(L3···LH) + ... + yH
//! ```
//!
//! which is also the flattening order of the Kronecker product
//! `O¹ ⊗ O² ⊗ ... ⊗ Oᴴ`. The codec is total on `[0, capacity)`; datasets
//! are responsible for rejecting labels at or above their own class count.

use std::fmt;

use crate::error::{MheError, Result};
use crate::linalg::matrix::{argmax, DenseVector};

/// Largest Kronecker product [`kronecker_combine`] will materialize.
pub const KRONECKER_LIMIT: usize = 1 << 24;

/// Ordered head widths and their product.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HeadPlan {
    lengths: Vec<usize>,
    // `None` only for partition plans whose product does not fit in `usize`.
    capacity: Option<usize>,
}

impl HeadPlan {
    /// A radix plan; rejects products that overflow `usize`.
    pub fn new(lengths: Vec<usize>) -> Result<Self> {
        let plan = Self::partition(lengths)?;
        if plan.capacity.is_none() {
            return Err(MheError::Plan(format!(
                "capacity of {:?} overflows the index type",
                plan.lengths
            )));
        }
        Ok(plan)
    }

    /// A plan used only as a partition of the output rows (sampling heads).
    /// The product may overflow; such plans cannot be used with the codec.
    pub fn partition(lengths: Vec<usize>) -> Result<Self> {
        if lengths.is_empty() {
            return Err(MheError::Plan("a plan needs at least one head".into()));
        }
        if let Some(h) = lengths.iter().position(|&l| l == 0) {
            return Err(MheError::Plan(format!("head {h} has zero length")));
        }
        lengths
            .iter()
            .try_fold(0usize, |acc, &l| acc.checked_add(l))
            .ok_or_else(|| MheError::Plan(format!("total width of {lengths:?} overflows")))?;
        let capacity = lengths
            .iter()
            .try_fold(1usize, |acc, &l| acc.checked_mul(l));
        Ok(HeadPlan { lengths, capacity })
    }

    pub fn lengths(&self) -> &[usize] {
        &self.lengths
    }

    pub fn num_heads(&self) -> usize {
        self.lengths.len()
    }

    /// Product of all head lengths, saturating at `usize::MAX` for
    /// partition plans whose product overflows.
    pub fn capacity(&self) -> usize {
        self.capacity.unwrap_or(usize::MAX)
    }

    fn radix_capacity(&self) -> Result<usize> {
        self.capacity.ok_or_else(|| {
            MheError::Plan(format!("{self} has no representable radix capacity"))
        })
    }

    /// Sum of all head lengths (the number of classifier output rows).
    pub fn total_width(&self) -> usize {
        self.lengths.iter().sum()
    }

    /// Errors unless the plan can index `num_classes` labels.
    pub fn check_covers(&self, num_classes: usize) -> Result<()> {
        if self.capacity() < num_classes {
            return Err(MheError::Plan(format!(
                "capacity {} of {:?} is smaller than the {} classes it must serve",
                self.capacity(), self.lengths, num_classes
            )));
        }
        Ok(())
    }

    /// `stride[h] = L(h+1) ··· LH`, the place value of digit `h`.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1usize; self.lengths.len()];
        for h in (0..self.lengths.len().saturating_sub(1)).rev() {
            strides[h] = strides[h + 1].saturating_mul(self.lengths[h + 1]);
        }
        strides
    }

    /// Number of distinct prefixes made of the first `h + 1` digits.
    pub fn prefix_capacity(&self, h: usize) -> usize {
        self.lengths[..=h].iter().fold(1usize, |a, &l| a.saturating_mul(l))
    }
}

impl fmt::Display for HeadPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.lengths.iter().map(|l| l.to_string()).collect();
        write!(f, "[{}]", parts.join(","))
    }
}

/// A label in the global label space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GlobalLabel(usize);

impl GlobalLabel {
    pub const fn new(index: usize) -> Self {
        GlobalLabel(index)
    }

    pub const fn index(self) -> usize {
        self.0
    }
}

impl From<usize> for GlobalLabel {
    fn from(i: usize) -> Self {
        GlobalLabel(i)
    }
}

impl fmt::Display for GlobalLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Per-head digits of one global label.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LocalLabels(Vec<usize>);

impl LocalLabels {
    pub fn new(indices: Vec<usize>) -> Self {
        LocalLabels(indices)
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }
}

/// Mixed-radix digits of `y`, most significant head first.
pub fn decompose(y: GlobalLabel, plan: &HeadPlan) -> Result<LocalLabels> {
    let capacity = plan.radix_capacity()?;
    if y.0 >= capacity {
        return Err(MheError::Range {
            index: y.0,
            capacity,
        });
    }
    let mut rest = y.0;
    let mut digits = Vec::with_capacity(plan.num_heads());
    for stride in plan.strides() {
        digits.push(rest / stride);
        rest %= stride;
    }
    Ok(LocalLabels(digits))
}

/// Inverse of [`decompose`].
pub fn combine(locals: &LocalLabels, plan: &HeadPlan) -> Result<GlobalLabel> {
    if locals.0.len() != plan.num_heads() {
        return Err(MheError::shape(
            format!("{} local labels", plan.num_heads()),
            format!("{}", locals.0.len()),
        ));
    }
    plan.radix_capacity()?;
    let mut y = 0usize;
    for (&digit, &len) in locals.0.iter().zip(plan.lengths()) {
        if digit >= len {
            return Err(MheError::Range {
                index: digit,
                capacity: len,
            });
        }
        y = y * len + digit;
    }
    Ok(GlobalLabel(y))
}

/// Full Kronecker product `O¹ ⊗ ... ⊗ Oᴴ`, flattened in the codec's order.
///
/// Only meant for small oracle instances; refuses products longer than
/// [`KRONECKER_LIMIT`].
pub fn kronecker_combine(outputs: &[DenseVector]) -> Result<DenseVector> {
    kronecker_combine_with_limit(outputs, KRONECKER_LIMIT)
}

pub fn kronecker_combine_with_limit(outputs: &[DenseVector], limit: usize) -> Result<DenseVector> {
    if outputs.is_empty() {
        return Err(MheError::domain("kronecker product of zero vectors"));
    }
    if let Some(h) = outputs.iter().position(DenseVector::is_empty) {
        return Err(MheError::domain(format!("head {h} output is empty")));
    }
    let capacity = outputs
        .iter()
        .try_fold(1usize, |acc, v| acc.checked_mul(v.len()))
        .unwrap_or(usize::MAX);
    if capacity > limit {
        return Err(MheError::Resource { capacity, limit });
    }
    let mut acc = vec![1.0];
    for v in outputs {
        let mut next = Vec::with_capacity(acc.len() * v.len());
        for &a in &acc {
            next.extend(v.as_slice().iter().map(|&b| a * b));
        }
        acc = next;
    }
    Ok(DenseVector(acc))
}

/// Result of comparing the materialized-product argmax with the per-head combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArgmaxEquivalence {
    pub product_argmax: GlobalLabel,
    pub combined_argmax: GlobalLabel,
    pub agree: bool,
}

/// Brute-force check that `argmax(O¹ ⊗ ... ⊗ Oᴴ)` equals the combination of the
/// per-head argmaxes.
///
/// Entries must be finite and strictly positive and every head must have a
/// unique maximum; a tied maximum is reported as [`MheError::Tie`].
pub fn oracle_argmax_equivalence(outputs: &[DenseVector]) -> Result<ArgmaxEquivalence> {
    let mut digits = Vec::with_capacity(outputs.len());
    for (h, v) in outputs.iter().enumerate() {
        if let Some(&bad) = v.as_slice().iter().find(|&&x| x.is_nan() || x <= 0.0 || x.is_infinite()) {
            return Err(MheError::domain(format!(
                "head {h} has non-positive or non-finite entry {bad}"
            )));
        }
        let best = argmax(v.as_slice())
            .ok_or_else(|| MheError::domain(format!("head {h} output is empty")))?;
        if let Some(other) = (0..v.len()).find(|&i| i != best && v[i] == v[best]) {
            return Err(MheError::Tie {
                head: h,
                first: best.min(other),
                second: best.max(other),
            });
        }
        digits.push(best);
    }
    let plan = HeadPlan::new(outputs.iter().map(DenseVector::len).collect())?;
    let product = kronecker_combine(outputs)?;
    let product_argmax = GlobalLabel(argmax(product.as_slice()).expect("non-empty product"));
    let combined_argmax = combine(&LocalLabels(digits), &plan)?;
    Ok(ArgmaxEquivalence {
        product_argmax,
        combined_argmax,
        agree: product_argmax == combined_argmax,
    })
}

/// Indicator vector of length `width` with a one at `y`.
pub fn one_hot(y: GlobalLabel, width: usize) -> Result<DenseVector> {
    if y.0 >= width {
        return Err(MheError::Range {
            index: y.0,
            capacity: width,
        });
    }
    let mut v = DenseVector::zeros(width);
    v[y.0] = 1.0;
    Ok(v)
}
