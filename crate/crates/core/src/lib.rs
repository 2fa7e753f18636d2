//! Multi-head encoding (MHE) for extreme label classification.
//!
//! A label space of `C` classes is factored onto `H` small classification
//! heads through a mixed-radix code ([`codec`]). Head lengths come from
//! [`planner`]; [`models`] implements the product (MHP), cascade (MHC) and
//! sampling (MHS) classifiers next to a one-hot baseline; [`data`] reads
//! XMLC-format datasets and computes metrics; [`theory`] holds numerical
//! experiments on low-rank classifiers.

pub mod codec;
pub mod data;
pub mod error;
pub mod linalg;
pub mod models;
pub mod planner;
pub mod theory;

pub use codec::{GlobalLabel, HeadPlan, LocalLabels};
pub use error::{MheError, Result};
pub use planner::Strategy;
