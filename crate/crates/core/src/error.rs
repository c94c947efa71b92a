use thiserror::Error;

/// Errors raised by the numerical laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("solver did not converge after {iterations} iterations (last residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("fixed-point contraction failed at sigma = {sigma} (last residual {residual:e})")]
    Contraction { sigma: f64, residual: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("spectral hypothesis violated: {0}")]
    SpectralHypothesis(String),

    #[error("integrand does not decay: {0}")]
    SpectralDecay(String),

    #[error("non-finite state at t = {t}")]
    BlowUp { t: f64 },

    #[error("corrupt data: {0}")]
    Corrupt(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
