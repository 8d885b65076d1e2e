use thiserror::Error;

/// Crate-wide error type. Variants map onto the CLI exit-code taxonomy:
/// usage/validation problems exit 2, training aborts exit 3, corrupt
/// artifacts exit 4.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("training error in `{block}`: {message}")]
    Training { block: String, message: String },

    #[error("no neighbors within the treatment radius")]
    NoNeighbors,

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("generator spec error: {0}")]
    Spec(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("artifact integrity error: {0}")]
    Integrity(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("metric unavailable: {0}")]
    MetricUnavailable(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
