use thiserror::Error;

/// Failures raised by model adapters.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum BackendError {
    /// Transient failure; the call may succeed if retried.
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    /// The model produced an empty generation.
    #[error("degenerate response from backend")]
    DegenerateResponse,
    #[error("invalid backend input: {0}")]
    InvalidInput(String),
}

impl BackendError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, BackendError::Unavailable(_))
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid bounding box: {0}")]
    InvalidBox(String),
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    /// Every patch failed to produce a usable model response.
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("metric undefined: {0}")]
    Undefined(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
