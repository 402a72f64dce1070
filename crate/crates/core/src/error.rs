use thiserror::Error;

/// Errors raised while building models, drawing noise or running estimators.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("coefficient `{coefficient}` is not finite at t={t}, x={x:?}")]
    NonFiniteCoefficient {
        coefficient: &'static str,
        t: f64,
        x: Vec<f64>,
    },

    #[error("coefficient `{coefficient}` returned different values for identical inputs")]
    ImpureCoefficient { coefficient: &'static str },

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("state became non-finite after step {step} (t={t})")]
    NonFiniteState { step: usize, t: f64 },

    #[error("model has no exact reference solution")]
    MissingReference,

    #[error("trajectory {index} failed: {cause}")]
    TrajectoryFailure { index: usize, cause: Box<Error> },
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
