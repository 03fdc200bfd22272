use thiserror::Error;

/// Errors raised by the solvers and their input validation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum HjError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A square-root argument was negative beyond rounding, which means a
    /// point was sent to the wrong branch.
    #[error("internal consistency failure: {0}")]
    Internal(String),

    #[error("newton iteration did not converge after {iterations} steps (best iterate {best}, residual {residual:e})")]
    NewtonNotConverged {
        iterations: usize,
        best: f64,
        residual: f64,
    },

    #[error("matrix is not symmetric positive definite")]
    NotPositiveDefinite,

    #[error("matrix is singular")]
    SingularMatrix,

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("descent did not converge within {0} iterations")]
    DescentNotConverged(usize),
}

pub type Result<T> = std::result::Result<T, HjError>;

pub(crate) fn check_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(HjError::InvalidInput(format!("{name} must be finite, got {v}")))
    }
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(HjError::DimensionMismatch { expected, got })
    }
}
