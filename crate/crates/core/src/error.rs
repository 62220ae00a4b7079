use thiserror::Error;

/// Errors raised by toolkit operations.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("decomposition failed to converge (residual {residual:e})")]
    DecompositionFailure { residual: f64 },

    #[error("invalid operation: sum of A_i^dagger A_i exceeds identity by {excess:e}")]
    InvalidOperation { excess: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("resource cap exceeded: {0}")]
    Resource(String),

    #[error("unknown channel `{0}`")]
    UnknownChannel(String),

    #[error("parameter {value} out of range for {name}")]
    ParamOutOfRange { name: String, value: f64 },

    #[error("inconsistent input: {0}")]
    InconsistentInput(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
