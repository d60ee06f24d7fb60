//! Regression trees for incomplete data, imputation pipelines, closed-form
//! single-split risk theory and a simulation harness.

pub mod bench;
pub mod csvio;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod impute;
pub mod seed;
pub mod synth;
pub mod theory;
pub mod tree;

pub use data::{IncompleteMatrix, TargetVector};
pub use error::{Error, Result};
