use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at data row {row}, column '{column}': {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("discovery error: {0}")]
    Discovery(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("oracle infeasible: {0}")]
    OracleInfeasible(String),

    #[error("tuning error: {0}")]
    Tuning(String),

    #[error("evaluation failed in fold {fold}, trace '{trace_id}': {source}")]
    Instance {
        fold: usize,
        trace_id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("training failed in fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// The innermost error, past fold and instance context.
    pub fn root(&self) -> &Error {
        match self {
            Error::Instance { source, .. } | Error::Fold { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for errors caused by the caller's input rather than by a
    /// failure inside the engine.
    pub fn is_user_error(&self) -> bool {
        match self {
            Error::Schema(_)
            | Error::Parse { .. }
            | Error::Validation(_)
            | Error::Domain(_)
            | Error::InsufficientData(_)
            | Error::Infeasible(_)
            | Error::Discovery(_)
            | Error::Tuning(_)
            | Error::Io { .. }
            | Error::Csv(_)
            | Error::Json(_) => true,
            Error::Alignment(_) | Error::OracleInfeasible(_) => false,
            Error::Instance { source, .. } | Error::Fold { source, .. } => source.is_user_error(),
        }
    }
}
