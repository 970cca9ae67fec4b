//! Crate-wide error and result types.

use thiserror::Error;

/// Errors produced by the library.
///
/// `Domain` marks violated mathematical preconditions, `Config` malformed
/// run descriptions, `Numerical` algorithmic failures such as a root search
/// that found nothing usable. `Io` and `Csv` wrap file-level failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Self::Domain(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Self::Config(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Self::Numerical(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
