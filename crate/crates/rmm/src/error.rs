//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by construction, training, and evaluation routines.
#[derive(Debug, Error)]
pub enum Error {
    /// A hyperparameter lies outside its admissible range.
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),

    /// Two arguments disagree on a dimension they must share.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// The regularized normal matrix could not be inverted.
    #[error("normal matrix is singular; increase the ridge regularization (lambda > 0)")]
    SingularSystem,

    /// An argument violates a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A task name does not match any known generator.
    #[error("unknown task '{0}'; valid tasks: latch, copy, repeat_copy, shift")]
    UnknownTask(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
