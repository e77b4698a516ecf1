use thiserror::Error;

/// Errors produced by the solvers and the configuration layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid initial density: {0}")]
    InvalidDensity(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    /// The profile violates `α·sup_x m([0,x]) ≤ 1` (or `m({0}) < 1/α`) and no override was given.
    #[error("supercritical initial condition: {0}")]
    Supercritical(String),

    #[error("grid mismatch: expected {expected} nodes, found {found}")]
    GridMismatch { expected: usize, found: usize },

    #[error("path starts below the reflecting barrier (f_0 = {0})")]
    StartBelowBarrier(f64),

    #[error("invalid initial positions: {0}")]
    InvalidInitialCondition(String),

    #[error("PDE mass drift {drift:.3e} exceeds {limit:.1e} at t = {t:.4}")]
    MassDrift { drift: f64, limit: f64, t: f64 },

    #[error("{file}:{line}: {message}")]
    Parse { file: String, line: usize, message: String },

    #[error("fixed-point iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("{0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
