use thiserror::Error;

use crate::measure::QuantileMeasure;

/// Errors produced by the transport, proximal, and verification layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("parameter `{name}` out of range: {reason}")]
    OutOfRange { name: &'static str, reason: String },

    /// `1 + lambda * tau` must stay positive for the proximal map to be well-defined.
    #[error("step size violation: 1 + lambda*tau = {0} must be positive")]
    StepSize(f64),

    #[error("unsupported input: {0}")]
    Unsupported(String),

    /// The hypotheses of a theorem-backed check are not met by the inputs.
    #[error("hypothesis not satisfied: {0}")]
    Hypothesis(String),

    /// The proximal solver stopped before meeting its tolerance.
    #[error("proximal solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NotConverged {
        iterations: usize,
        residual: f64,
        best: Box<QuantileMeasure>,
    },

    #[error("quadrature failed: {0}")]
    Quadrature(String),

    #[error("root finding failed: {0}")]
    Root(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn out_of_range(name: &'static str, reason: impl Into<String>) -> Error {
    Error::OutOfRange {
        name,
        reason: reason.into(),
    }
}
