use thiserror::Error;

/// Errors raised by the operator, approximation, preconditioning and
/// solver layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("operator does not support {0}")]
    Unsupported(&'static str),

    #[error("cholesky breakdown after {attempts} shift escalations (last shift {shift:e})")]
    CholeskyBreakdown { shift: f64, attempts: usize },

    #[error("solver diverged at iteration {iteration}: non-finite {quantity}")]
    Diverged {
        iteration: usize,
        quantity: &'static str,
        residual_history: Vec<f64>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
