//! Seeded synthetic datasets.

use super::{SparseDataset, SparseExample};
use crate::codec::GlobalLabel;
use crate::error::{MheError, Result};
use crate::linalg::RngState;

/// `n` standard-normal feature vectors of dimension `d`; example `i` gets
/// label `i mod c`, so `n = c` gives one example per class.
pub fn gen_gaussian_classification(n: usize, d: usize, c: usize, seed: u64) -> Result<SparseDataset> {
    if n == 0 || d == 0 || c == 0 {
        return Err(MheError::domain("N, D and C must all be at least 1"));
    }
    let mut rng = RngState::new(seed);
    let examples = (0..n)
        .map(|i| SparseExample {
            features: (0..d).map(|j| (j, rng.normal())).collect(),
            labels: vec![GlobalLabel::new(i % c)],
        })
        .collect();
    Ok(SparseDataset {
        name: format!("gaussian-n{n}-d{d}-c{c}"),
        num_features: d,
        num_labels: c,
        examples,
    })
}

/// `per_class` points around each of `c` class means in `c` dimensions.
///
/// Mean `k` is `(margin / √2) · e_k`, so all means are `margin` apart, and
/// points add isotropic noise with standard deviation `margin / (16 √c)`, so
/// the expected noise norm is about `margin / 16` whatever the dimension. The
/// means do not depend on the seed, so two seeds give train and test splits
/// of the same problem.
pub fn gen_separable_toy(c: usize, per_class: usize, margin: f64, seed: u64) -> Result<SparseDataset> {
    if c < 2 {
        return Err(MheError::domain("the separable toy needs at least 2 classes"));
    }
    if !(margin >= 0.0 && margin.is_finite()) {
        return Err(MheError::domain(format!("margin must be finite and non-negative, got {margin}")));
    }
    let mut rng = RngState::new(seed);
    let offset = margin / std::f64::consts::SQRT_2;
    let noise = margin / (16.0 * (c as f64).sqrt());
    let mut examples = Vec::with_capacity(c * per_class);
    for _ in 0..per_class {
        for k in 0..c {
            let features = (0..c)
                .map(|j| {
                    let mean = if j == k { offset } else { 0.0 };
                    (j, mean + noise * rng.normal())
                })
                .collect();
            examples.push(SparseExample {
                features,
                labels: vec![GlobalLabel::new(k)],
            });
        }
    }
    Ok(SparseDataset {
        name: format!("separable-c{c}"),
        num_features: c,
        num_labels: c,
        examples,
    })
}
