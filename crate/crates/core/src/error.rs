use thiserror::Error;

/// Errors raised by the solvers, designers and simulators.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {found}")]
    Dimension {
        context: String,
        expected: String,
        found: String,
    },

    /// A matrix that must be Schur stable is not (or not by the required margin).
    #[error("{context} is not stable: spectral radius {spectral_radius}")]
    Instability {
        context: String,
        spectral_radius: f64,
    },

    #[error("invalid {field}: {reason}")]
    Validation { field: String, reason: String },

    #[error("{solver} did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence {
        solver: String,
        iterations: usize,
        residual: f64,
    },

    #[error("target {target} outside the feasible interval [{lower}, {upper}]")]
    InfeasibleTarget { target: f64, lower: f64, upper: f64 },

    #[error("need at least {required} samples, have {available}")]
    TooFewSamples { required: usize, available: usize },
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn dimension(
        context: impl Into<String>,
        expected: impl std::fmt::Display,
        found: impl std::fmt::Display,
    ) -> Self {
        Error::Dimension {
            context: context.into(),
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub(crate) fn unstable(context: impl Into<String>, spectral_radius: f64) -> Self {
        Error::Instability {
            context: context.into(),
            spectral_radius,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
