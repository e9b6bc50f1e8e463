use thiserror::Error;

/// Failure modes shared across the tabular toolkit.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Model construction rejected (simplex violation, shape mismatch, bad discount).
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A linear system or floating-point computation produced no usable result.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// An iterative solve hit its iteration cap before reaching tolerance.
    #[error("no convergence after {0} iterations")]
    Convergence(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
