use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("Hurst index {0} outside the admissible range")]
    HurstOutOfRange(f64),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("time must be positive, got {0}")]
    NonPositiveTime(f64),

    /// Circulant embedding produced a negative eigenvalue beyond tolerance.
    #[error("circulant embedding is not nonnegative definite (smallest eigenvalue {min_eigenvalue:e})")]
    Embedding { min_eigenvalue: f64 },

    #[error("quadrature failed: {0}")]
    Quadrature(String),

    #[error("numerical instability at step {step}")]
    Instability { step: usize },

    /// The estimator declined to run on the given inputs.
    #[error("refused: {0}")]
    Refused(String),

    #[error("non-positive moment at lag {lag}")]
    NonPositiveMoment { lag: f64 },

    #[error("singular regression design")]
    SingularDesign,
}

impl Error {
    /// True for errors caused by bad configuration rather than numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::HurstOutOfRange(_)
                | Error::InvalidGrid(_)
                | Error::InvalidInput(_)
                | Error::NonPositiveTime(_)
                | Error::Refused(_)
        )
    }
}

pub type Result<T> = core::result::Result<T, Error>;
