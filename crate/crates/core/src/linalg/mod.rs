//! Dense `f64` linear algebra, losses, optimizers and a seeded generator.

pub mod matrix;
pub mod ops;
pub mod optim;
pub mod rng;
pub mod svd;

pub use matrix::{DenseMatrix, DenseVector};
pub use ops::{affine, bce_with_sigmoid_loss, cross_entropy_loss, frobenius_loss, softmax};
pub use optim::{cosine_lr, sgd_step, Adam};
pub use rng::RngState;
pub use svd::{numerical_rank, singular_values, svd, Svd};

/// Default relative tolerance for [`numerical_rank`].
pub const DEFAULT_RANK_TOLERANCE: f64 = 1e-8;
