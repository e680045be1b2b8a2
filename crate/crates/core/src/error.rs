use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("argument outside domain: {0}")]
    Domain(String),

    /// Quadrature failed to converge. `estimate` is the best partial value.
    #[error("quadrature did not converge: {detail} (partial estimate {estimate:e})")]
    Quadrature { estimate: f64, detail: String },

    #[error("no solution: {0}")]
    NoSolution(String),

    #[error("queue is unstable: {0}")]
    Unstable(String),

    #[error("virtual curves do not cross below theta = {cap:e}: {dominant} dominates")]
    NoCrossing { cap: f64, dominant: &'static str },

    #[error("insufficient data for decay fit: {usable} usable thresholds, need at least {required}")]
    InsufficientData { usable: usize, required: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
