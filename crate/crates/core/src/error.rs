use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A computation failed for numerical reasons (singular system, dead chain, ...).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The sampling configuration violates the high-frequency regime budget.
    #[error("regime violation: n*Delta^2*log(1/Delta) = {value:.4} exceeds L0 = {budget}")]
    Regime { value: f64, budget: f64 },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::Invalid(msg.into())
}
