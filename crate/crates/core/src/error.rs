use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse error classes; the command-line driver maps these to exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Training,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("IoU threshold must lie in (0, 1), got {0}")]
    InvalidThreshold(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Manifest {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("page {page}: {message}")]
    Page { page: String, message: String },

    #[error("duplicate page id {0}")]
    DuplicatePage(String),

    #[error("{path}: malformed PGM: {message}")]
    Pgm { path: PathBuf, message: String },

    #[error("curriculum: {0}")]
    Curriculum(String),

    #[error("training produced a non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("training set is empty")]
    EmptyTrainingSet,

    #[error("external detector: {0}")]
    External(String),

    #[error("external detector emitted score {score} for page {page}; score 1 is reserved for ground truth")]
    ReservedScore { page: String, score: f64 },

    #[error("evaluation: {0}")]
    Evaluation(String),

    #[error("report: {0}")]
    Report(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn page(page: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Page {
            page: page.into(),
            message: message.into(),
        }
    }

    /// Wraps the error with the name of the pipeline stage that failed.
    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidThreshold(_) | Error::InvalidConfig(_) => ErrorClass::Usage,
            Error::NonFiniteLoss { .. } | Error::EmptyTrainingSet | Error::External(_) => {
                ErrorClass::Training
            }
            Error::ReservedScore { .. } => ErrorClass::Training,
            Error::Stage { source, .. } => source.class(),
            _ => ErrorClass::Data,
        }
    }
}
