use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("matrix is numerically singular beyond the jitter budget ({context})")]
    Singular { context: &'static str },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("hyperparameter fit failed: {0}")]
    FitFailed(String),

    #[error("basis `{0}` has no second-order specification under uncertain inputs")]
    UnsupportedBasis(String),

    #[error("network validation failed:\n  {}", .0.join("\n  "))]
    InvalidNetwork(Vec<String>),

    #[error("direct emulation needs an exact function for node {0}")]
    MissingExactFunction(usize),

    #[error("empty input to {0}")]
    Empty(&'static str),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit code for the command-line front end: 2 for bad input or
    /// validation failures, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Singular { .. } | Error::FitFailed(_) => 3,
            _ => 2,
        }
    }
}
