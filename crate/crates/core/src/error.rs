use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("{}: {msg}", path.display())]
    Dataset { path: PathBuf, msg: String },

    #[error("kernel matrix is not positive definite (jitter exhausted at {jitter:e})")]
    NotPositiveDefinite { jitter: f64 },

    #[error("malformed trace: {0}")]
    Trace(String),

    #[error("config: {0}")]
    Config(String),

    #[error("csv row {row}, column `{column}`: {msg}")]
    Csv { row: usize, column: String, msg: String },

    #[error("run k={k} lambda_max={lambda_max} seed={seed}: {source}")]
    Run {
        k: usize,
        lambda_max: f64,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
