use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("model evaluation produced a non-finite {what} at coordinate {index}")]
    NonFinite { what: &'static str, index: usize },
    #[error("capability error: {0}")]
    Capability(String),
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("observation {index}: {source}")]
    AtObservation { index: usize, source: Box<Error> },
    #[error("non-finite state after step {step}")]
    NonFiniteState { step: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unknown {kind} '{name}'")]
    Unknown { kind: &'static str, name: String },
    #[error("optimizer aborted at iteration {iteration}: {reason}")]
    Optimizer { iteration: usize, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

