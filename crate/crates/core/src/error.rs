use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("object not visible")]
    NotVisible,
    #[error("scene sampling exhausted after {attempts} attempts")]
    SamplingExhausted { attempts: usize },
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("unsupported schema `{found}` (expected `{expected}`)")]
    Schema { found: String, expected: String },
    #[error("representation invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
