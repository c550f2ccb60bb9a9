use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FdxError {
    /// An argument fell outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    /// A procedure was requested without the inputs it needs.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid step CDF: {0}")]
    InvalidStep(String),
}

pub type Result<T> = std::result::Result<T, FdxError>;
