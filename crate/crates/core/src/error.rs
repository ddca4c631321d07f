use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("EDF parse error at byte {offset} ({field}): {message}")]
    EdfParse {
        offset: usize,
        field: &'static str,
        message: String,
    },

    #[error("EDF signal {signal} ({label}) has digital_max == digital_min = {digital}")]
    EdfScaling {
        signal: usize,
        label: String,
        digital: i32,
    },

    #[error("EDF data section truncated: header declares {expected} records, file holds {actual}")]
    EdfTruncated { expected: usize, actual: usize },

    #[error("invalid recording: {0}")]
    InvalidRecording(String),

    #[error("annotation validation error: {0}")]
    Annotation(String),

    #[error("synthetic generation error: {0}")]
    Synthetic(String),

    #[error("filter design error: {0}")]
    FilterDesign(String),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("undefined statistic: {0}")]
    Undefined(String),

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

impl Error {
    /// Process exit status: 2 for problems with the user's inputs or
    /// configuration, 1 for internal failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. }
            | Error::EdfParse { .. }
            | Error::EdfScaling { .. }
            | Error::EdfTruncated { .. }
            | Error::InvalidRecording(_)
            | Error::Annotation(_)
            | Error::Synthetic(_)
            | Error::FilterDesign(_)
            | Error::Config(_) => 2,
            Error::Dimension(_)
            | Error::NonFinite(_)
            | Error::Undefined(_)
            | Error::Checkpoint(_) => 1,
        }
    }
}
