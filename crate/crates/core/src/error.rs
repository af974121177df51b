//! Error type shared across the library.
//!
//! Two failure families matter operationally: *validation* errors (bad
//! parameters, malformed inputs — the caller's fault, exit code 2 in the CLI)
//! and *numerical* errors (a computation produced non-finite values or an
//! iteration failed to stay in its admissible regime — exit code 3).

use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid parameters or inputs; the request never started computing.
    #[error("validation: {0}")]
    Validation(String),

    /// A computation aborted: non-finite values, failed invariants, or an
    /// estimator outside its supported regime.
    #[error("numerical: {0}")]
    Numerical(String),

    /// I/O failure while reading or writing artifacts (sample matrices,
    /// configs, CSV output).
    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    /// JSON (de)serialization failure for configs and records.
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Convenience constructor for validation failures.
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// Convenience constructor for numerical failures.
    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}

/// Library-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
