use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// `E[e^{θX}]` is infinite, or `θ` is outside `(0, ∞)`.
    #[error("κ({theta}) is not finite: {reason}")]
    Domain { theta: f64, reason: String },

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("population {population} exceeds budget {budget} at generation {generation} after pruning; raise eps_prune or lower n")]
    Budget {
        generation: u32,
        population: usize,
        budget: usize,
    },

    #[error("regime mismatch: {0}")]
    Regime(String),

    #[error("window does not cover the test function: {0}")]
    Window(String),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn domain(theta: f64, reason: impl Into<String>) -> Self {
        Error::Domain {
            theta,
            reason: reason.into(),
        }
    }
}
