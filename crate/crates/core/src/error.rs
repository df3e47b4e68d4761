use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Data,
    InsufficientStatistics,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Validation => 2,
            ErrorKind::Data => 3,
            ErrorKind::InsufficientStatistics => 4,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("series too short: need more than {needed} points, got {got}")]
    Length { needed: usize, got: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("index range error: {0}")]
    Range(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("{path}: missing column `{column}`")]
    Schema { path: PathBuf, column: String },

    #[error("{path}:{line}: {message}")]
    Row {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: {message}")]
    Integrity {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("no usable data: {0}")]
    EmptyData(String),

    #[error("tail fit failed: {0}")]
    Fit(String),

    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error("unknown {kind} `{name}` (available: {available})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        available: String,
    },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("{context}: {source}")]
    Csv {
        context: String,
        #[source]
        source: csv::Error,
    },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Parameter(_) | Error::UnknownStrategy { .. } | Error::Json { .. } => {
                ErrorKind::Validation
            }
            Error::EmptyData(_) | Error::Fit(_) | Error::Degenerate(_) => {
                ErrorKind::InsufficientStatistics
            }
            Error::Context { source, .. } => source.kind(),
            _ => ErrorKind::Data,
        }
    }

    pub fn context(self, context: impl Into<String>) -> Error {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Error {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Parameter(msg()))
    }
}
