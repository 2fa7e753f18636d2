//! Accuracy, precision at K, and a plain-text metrics report.

use std::collections::BTreeSet;
use std::fmt;

use crate::codec::GlobalLabel;
use crate::error::{MheError, Result};

/// `|top-K ∩ truth| / K`; rankings shorter than `K` still divide by `K`.
pub fn precision_at_k(ranked: &[GlobalLabel], truth: &[GlobalLabel], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(MheError::domain("P@K needs K >= 1"));
    }
    let top: BTreeSet<&GlobalLabel> = ranked.iter().take(k).collect();
    let truth: BTreeSet<&GlobalLabel> = truth.iter().collect();
    let hits = top.intersection(&truth).count();
    Ok(hits as f64 / k as f64)
}

/// Fraction of positions where `predicted` equals `truth`.
pub fn accuracy(predicted: &[GlobalLabel], truth: &[GlobalLabel]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(MheError::shape(
            format!("{} predictions", truth.len()),
            format!("{} predictions", predicted.len()),
        ));
    }
    if truth.is_empty() {
        return Err(MheError::domain("accuracy of an empty list is undefined"));
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Ordered `metric<TAB>value` lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsReport {
    entries: Vec<(String, f64)>,
}

impl MetricsReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: f64) {
        self.entries.push((name.into(), value));
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries.iter().find(|(n, _)| n == name).map(|&(_, v)| v)
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, value) in &self.entries {
            writeln!(f, "{name}\t{value}")?;
        }
        Ok(())
    }
}
