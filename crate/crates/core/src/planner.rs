//! Choosing head counts and lengths.
//!
//! Product-style plans (MHP, MHC) cover `C` with the product of the head
//! lengths and keep every length within one step of `⌊C^(1/H)⌋`. Sampling
//! plans (MHS) instead partition the `C` outputs into contiguous groups, so
//! their lengths sum to `C`.

use std::fmt;
use std::str::FromStr;

use crate::codec::HeadPlan;
use crate::error::{MheError, Result};

/// Largest number of heads the planner and the arrangement search accept.
pub const MAX_HEADS: usize = 8;

/// Classifier strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    Vanilla,
    Mhp,
    Mhc,
    Mhs,
}

impl Strategy {
    pub fn tag(self) -> u8 {
        match self {
            Strategy::Vanilla => 0,
            Strategy::Mhp => 1,
            Strategy::Mhc => 2,
            Strategy::Mhs => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Some(match tag {
            0 => Strategy::Vanilla,
            1 => Strategy::Mhp,
            2 => Strategy::Mhc,
            3 => Strategy::Mhs,
            _ => return None,
        })
    }

    /// Whether head lengths partition the label space instead of factoring it.
    pub fn is_partition(self) -> bool {
        matches!(self, Strategy::Mhs)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Vanilla => "vanilla",
            Strategy::Mhp => "mhp",
            Strategy::Mhc => "mhc",
            Strategy::Mhs => "mhs",
        })
    }
}

impl FromStr for Strategy {
    type Err = MheError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vanilla" => Ok(Strategy::Vanilla),
            "mhp" => Ok(Strategy::Mhp),
            "mhc" => Ok(Strategy::Mhc),
            "mhs" => Ok(Strategy::Mhs),
            other => Err(MheError::Usage(format!(
                "unknown strategy '{other}' (expected vanilla, mhp, mhc or mhs)"
            ))),
        }
    }
}

/// Confusion degree `D` of the heads taken in the order given by `arrangement`.
///
/// `arrangement[i]` is the index into `plan.lengths()` of the head placed at
/// position `i`. Evaluates `Π_{h=2..H} (Π_{k=h..H} L_k) / L_{h-1}`.
pub fn confusion_degree(plan: &HeadPlan, arrangement: &[usize]) -> Result<f64> {
    let h = plan.num_heads();
    if h < 2 {
        return Err(MheError::domain("confusion degree defined for H >= 2"));
    }
    let mut seen = vec![false; h];
    if arrangement.len() != h
        || arrangement
            .iter()
            .any(|&i| i >= h || std::mem::replace(&mut seen[i], true))
    {
        return Err(MheError::domain(format!(
            "{arrangement:?} is not a permutation of {h} heads"
        )));
    }
    let lengths: Vec<f64> = arrangement
        .iter()
        .map(|&i| plan.lengths()[i] as f64)
        .collect();
    let mut d = 1.0;
    for pos in 1..h {
        let tail: f64 = lengths[pos..].iter().product();
        d *= tail / lengths[pos - 1];
    }
    Ok(d)
}

/// Worst-case confusion degree over all `H!` arrangements.
pub fn max_confusion_degree(plan: &HeadPlan) -> Result<f64> {
    let h = plan.num_heads();
    if h < 2 {
        return Err(MheError::domain("confusion degree defined for H >= 2"));
    }
    if h > MAX_HEADS {
        return Err(MheError::domain(format!(
            "arrangement search supports at most {MAX_HEADS} heads, got {h}"
        )));
    }
    let mut best = f64::NEG_INFINITY;
    for perm in permutations(h) {
        best = best.max(confusion_degree(plan, &perm)?);
    }
    Ok(best)
}

/// All permutations of `0..n` in lexicographic order.
pub(crate) fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..n).collect();
    loop {
        out.push(cur.clone());
        // Next lexicographic permutation.
        let Some(i) = (0..n.saturating_sub(1)).rev().find(|&i| cur[i] < cur[i + 1]) else {
            break;
        };
        let j = (i + 1..n).rev().find(|&j| cur[j] > cur[i]).unwrap();
        cur.swap(i, j);
        cur[i + 1..].reverse();
    }
    out
}

/// `⌊C^(1/H)⌋` computed exactly.
fn integer_root(c: usize, h: usize) -> usize {
    let pow_le = |r: usize| -> bool {
        let mut acc: usize = 1;
        for _ in 0..h {
            match acc.checked_mul(r) {
                Some(v) if v <= c => acc = v,
                _ => return false,
            }
        }
        true
    };
    let mut r = (c as f64).powf(1.0 / h as f64).round() as usize;
    r = r.max(1);
    while r > 1 && !pow_le(r) {
        r -= 1;
    }
    while pow_le(r + 1) {
        r += 1;
    }
    r
}

/// Chooses head lengths for `num_classes` labels split over `num_heads` heads.
pub fn plan_heads(num_classes: usize, num_heads: usize, strategy: Strategy) -> Result<HeadPlan> {
    if num_classes == 0 {
        return Err(MheError::domain("number of classes must be at least 1"));
    }
    if num_heads == 0 || num_heads > MAX_HEADS {
        return Err(MheError::domain(format!(
            "number of heads must be in 1..={MAX_HEADS}, got {num_heads}"
        )));
    }
    if num_heads == 1 {
        return HeadPlan::new(vec![num_classes]);
    }
    match strategy {
        Strategy::Vanilla => Err(MheError::domain(
            "the vanilla classifier has exactly one head",
        )),
        Strategy::Mhs => {
            if num_heads > num_classes {
                return Err(MheError::domain(format!(
                    "cannot partition {num_classes} labels into {num_heads} non-empty heads"
                )));
            }
            let base = num_classes / num_heads;
            let extra = num_classes % num_heads;
            HeadPlan::partition(
                (0..num_heads)
                    .map(|h| base + usize::from(h < extra))
                    .collect(),
            )
        }
        Strategy::Mhp | Strategy::Mhc => {
            let r = integer_root(num_classes, num_heads);
            let mut lengths = Vec::new();
            for bumped in 0..=num_heads {
                let candidate: Vec<usize> = (0..num_heads)
                    .map(|h| if h < num_heads - bumped { r } else { r + 1 })
                    .collect();
                let covers = candidate
                    .iter()
                    .try_fold(1usize, |acc, &l| acc.checked_mul(l))
                    .is_none_or(|p| p >= num_classes);
                if covers {
                    lengths = candidate;
                    break;
                }
            }
            if strategy == Strategy::Mhc {
                lengths.sort_unstable_by(|a, b| b.cmp(a));
            }
            HeadPlan::new(lengths)
        }
    }
}

/// Whether `plan` can serve `num_classes` labels under `strategy`.
pub fn check_plan_covers(plan: &HeadPlan, num_classes: usize, strategy: Strategy) -> Result<()> {
    if strategy.is_partition() {
        if plan.total_width() < num_classes {
            return Err(MheError::Plan(format!(
                "total width {} of {} is smaller than the {} classes it must serve",
                plan.total_width(),
                plan,
                num_classes
            )));
        }
        Ok(())
    } else {
        plan.check_covers(num_classes)
    }
}

/// Classifier parameters implied by the plan (the backbone is excluded).
pub fn parameter_count(plan: &HeadPlan, feature_dim: usize, with_bias: bool) -> usize {
    let width = plan.total_width();
    width * feature_dim + if with_bias { width } else { 0 }
}
