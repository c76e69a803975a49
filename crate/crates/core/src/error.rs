use thiserror::Error;

/// Errors raised by the simulator and its diagnostics.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("mass operator is singular: inf rho = {inf_rho:e}")]
    Singular { inf_rho: f64 },
    #[error("linear solve residual {residual:e} exceeds tolerance {tolerance:e}")]
    Solver { residual: f64, tolerance: f64 },
    #[error("CFL violation: dt*rate = {courant:.4} exceeds limit {limit:.4}")]
    Cfl { courant: f64, limit: f64 },
    #[error("scheme failure: {0}")]
    Scheme(String),
    #[error("index {index} out of range (horizon {horizon})")]
    OutOfRange { index: usize, horizon: usize },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("hard invariant violated: {0}")]
    Invariant(String),
    #[error("I/O error at {path}: {message}")]
    Io { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: &std::path::Path, err: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }
}
