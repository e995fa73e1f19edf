use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, BenchError>;

#[derive(Debug, Error)]
pub enum BenchError {
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

    #[error("{0}: no valid points")]
    NoValidPoints(PathBuf),

    #[error("missing ground-truth file: expected {0}")]
    MissingGroundTruth(PathBuf),

    #[error("invalid experiment: {0}")]
    InvalidSpec(String),

    #[error(transparent)]
    Registration(#[from] cobigicp::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl BenchError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        BenchError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        BenchError::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
