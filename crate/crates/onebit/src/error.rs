//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by any module in this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument was outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Vector/matrix dimensions do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// An integrand returned a non-finite value at a quadrature node.
    #[error("integrand evaluated to {value} at node {node}")]
    Eval { node: f64, value: f64 },

    /// The variance guard of the saddle-point equations was violated:
    /// `rho*sigma0_sq - m^2/q` must stay above the margin.
    #[error("singularity: rho*sigma0_sq - m^2/q = {margin:e} <= required {required:e}")]
    Singularity { margin: f64, required: f64 },

    /// An iterative scheme produced a non-finite iterate or failed to
    /// make progress.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A strategy variant was used with an operation that does not
    /// support it.
    #[error("strategy contract error: {0}")]
    Strategy(String),

    /// Configuration file or CLI grid errors.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
