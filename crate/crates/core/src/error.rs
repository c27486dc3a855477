use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library. Data-quality problems found while parsing
/// (bad rows, unknown APs) are reported through reject reports instead.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("header mismatch in {file}: expected `{expected}`, found `{found}`")]
    HeaderMismatch {
        file: String,
        expected: String,
        found: String,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("unknown shop `{0}`")]
    UnknownShop(String),
    #[error("unknown access point `{0}`")]
    UnknownAp(String),
    #[error("mall category `{0}` has no semantic mapping")]
    UnmappedCategory(String),
    #[error("no knowledge-graph root configured for category `{0}`")]
    MissingRoot(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("model is not fitted: {0}")]
    NotFitted(String),
    #[error("degenerate statistic: {0}")]
    Degenerate(String),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the filesystem rather than by the data.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io { .. } => true,
            Error::Csv(e) => e.is_io_error(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
