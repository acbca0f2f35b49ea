use std::path::PathBuf;

/// Errors produced by the PSCA pipeline.
#[derive(Debug, thiserror::Error)]
pub enum PscaError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("format error in {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("label error: {0}")]
    Label(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("degenerate prototypes: {0}")]
    DegeneratePrototypes(String),

    #[error("query has no relevant items in the database")]
    UndefinedQuery,

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl PscaError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PscaError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        PscaError::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, PscaError>;
