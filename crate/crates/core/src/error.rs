use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum MheError {
    #[error("index {index} out of range for capacity {capacity}")]
    Range { index: usize, capacity: usize },

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    #[error("{0}")]
    Domain(String),

    #[error("tie for the maximum in head {head} (positions {first} and {second})")]
    Tie {
        head: usize,
        first: usize,
        second: usize,
    },

    #[error("kronecker capacity {capacity} exceeds the limit of {limit}")]
    Resource { capacity: usize, limit: usize },

    #[error("invalid head plan: {0}")]
    Plan(String),

    #[error("{0}")]
    Usage(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: {message}")]
    Validation {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl MheError {
    pub(crate) fn shape(expected: impl Into<String>, actual: impl Into<String>) -> Self {
        MheError::Shape {
            expected: expected.into(),
            actual: actual.into(),
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        MheError::Domain(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, MheError>;
