use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid label {0:?}")]
    InvalidLabel(String),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("utterance {utterance}, token {token}: {message}")]
    InvalidToken {
        utterance: String,
        token: usize,
        message: String,
    },

    #[error("invalid corpus: {0}")]
    InvalidCorpus(String),

    #[error("feature file {path}: {message} (byte offset {offset})")]
    FeatureFormat {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    #[error("feature dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no admissible path for utterance {0}")]
    NoAdmissiblePath(String),

    #[error("no training segments for {0}")]
    NoTrainingData(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("zero denominator: {0}")]
    ZeroDenominator(&'static str),

    #[error("missing hypothesis for utterance {0}")]
    MissingHypothesis(String),

    #[error("model file: {0}")]
    ModelFormat(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 usage, 2 data, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Numerical(_) | Error::NoAdmissiblePath(_) => 3,
            _ => 2,
        }
    }
}
