use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("value out of range: {0}")]
    Range(String),

    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("loss function is not deterministic: {first} vs {second}")]
    Determinism { first: f64, second: f64 },

    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("non-finite loss at iteration {iteration} (seed {seed})")]
    NonFiniteLoss { iteration: usize, seed: u64 },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("cannot access {path}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }
}
