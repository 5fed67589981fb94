//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A model or configuration parameter violates its domain constraints.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A numerical operation broke down (singular matrix, non-PSD
    /// innovation covariance, non-finite intermediate).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A data file row failed validation; `line` is 1-based and counts the
    /// header.
    #[error("{path}:{line}: {msg}")]
    MalformedRow {
        path: String,
        line: usize,
        msg: String,
    },

    /// A required input column is absent.
    #[error("missing column '{0}'")]
    MissingColumn(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
