use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse failure class, used by the command line front end to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Schema {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("case {case_id}: violated articles {missing:?} are not among the claimed articles")]
    ViolatedNotClaimed { case_id: String, missing: Vec<u32> },

    #[error("{0}: corpus split is empty")]
    EmptyCorpus(PathBuf),

    #[error("case id {0:?} appears more than once across the splits")]
    DuplicateCase(String),

    #[error("no core article is present in both the validation and the test split")]
    NoArticles,

    #[error("invalid pattern {pattern:?}: {message}")]
    Pattern { pattern: String, message: String },

    #[error("no precomputed vector for case {0:?}")]
    MissingEmbedding(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("predictions and gold labels are misaligned: {0}")]
    Misaligned(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite gradient at coordinate {index} ({value}) after {step} steps")]
    NonFiniteGradient { index: usize, value: f64, step: u64 },

    #[error("training diverged at epoch {epoch} (last batch loss {loss}) with config {config}")]
    Diverged { epoch: usize, loss: f64, config: String },

    #[error("every grid configuration diverged")]
    AllConfigsDiverged,

    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::Pattern { .. } => ErrorKind::Usage,
            Error::NonFiniteGradient { .. } | Error::Diverged { .. } | Error::AllConfigsDiverged => {
                ErrorKind::Numeric
            }
            Error::Stage { source, .. } => source.kind(),
            _ => ErrorKind::Data,
        }
    }
}
