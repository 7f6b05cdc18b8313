use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AppError {
    /// A hypothesis of the theory fails (η ≥ c, missing moment bound, a
    /// validation check).
    #[error("hypothesis not satisfied: {0}")]
    Admissibility(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Admissibility(_) => 2,
            AppError::Numerical(_) => 3,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AppError::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<meanfield_core::Error> for AppError {
    fn from(e: meanfield_core::Error) -> Self {
        use meanfield_core::Error as E;
        match e {
            E::Inadmissible(msg) => AppError::Admissibility(msg),
            E::Numerical(msg) => AppError::Numerical(msg),
            other => AppError::Config(other.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, AppError>;
