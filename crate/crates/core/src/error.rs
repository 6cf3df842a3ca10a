use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Input outside the domain of a function, e.g. logdet of a non-PD matrix.
    #[error("domain error: {0}")]
    Domain(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("initialization failed: {0}")]
    Init(String),
    #[error("degenerate class {class}: {reason}")]
    DegenerateClass { class: usize, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;
