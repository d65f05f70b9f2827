use std::path::PathBuf;

/// Errors produced anywhere in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid request: {0}")]
    InvalidRequest(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("covariance matrix is not positive definite (pivot {pivot} = {value})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("index ({t}, {i}) outside a {rows}x{cols} matrix (1-based)")]
    IndexOutOfBounds {
        t: usize,
        i: usize,
        rows: usize,
        cols: usize,
    },

    #[error("invalid target: {0}")]
    InvalidTarget(String),

    #[error("ratio undefined: {0}")]
    UndefinedRatio(String),

    #[error("invalid perturbation operator: {0}")]
    InvalidOperator(String),

    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("model contract violated: {0}")]
    Contract(String),

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("unsupported experiment `{name}`: {reason}")]
    UnsupportedExperiment { name: String, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
