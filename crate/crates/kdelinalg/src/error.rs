//! Error type shared across the crate.

use thiserror::Error;

/// Errors returned by estimator constructors, queries and oracles.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a documented precondition (range, sign, emptiness, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Two arguments that must agree in dimension did not.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A brute-force oracle was asked to run above its configured size cap.
    #[error("oracle capacity exceeded: n = {n} is above the cap of {cap}")]
    CapacityExceeded { n: usize, cap: usize },

    /// A point file or generator spec failed to parse. `line` is 1-based.
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    /// An adversarial construction was requested with a noise budget too small
    /// to make the adversary's move legal.
    #[error("noise budget too small: move requires delta >= {required}, got {given}")]
    InsufficientBudget { required: f64, given: f64 },

    /// Underlying I/O failure while reading or writing point files.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
