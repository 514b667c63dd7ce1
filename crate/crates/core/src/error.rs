use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("{op} produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("{op}: input {value} at index {index} is outside the domain")]
    Domain { op: &'static str, index: usize, value: f64 },
    #[error("gradient for parameter `{name}` is not finite")]
    NonFiniteGradient { name: String },
    #[error("unknown parameter `{name}`")]
    UnknownParameter { name: String },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: malformed data at byte {offset}: {detail}")]
    Format { path: PathBuf, offset: u64, detail: String },
    #[error("invalid scene: {0}")]
    Scene(String),
    #[error("invalid dataset: {0}")]
    Dataset(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("training diverged at step {step}: {detail}")]
    Diverged { step: usize, detail: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
