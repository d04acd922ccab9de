use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = MudasError> = std::result::Result<T, E>;

/// Problems reading one of the binary or CSV file formats.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: &'static str, found: String },
    #[error("unsupported {format} version {version}")]
    UnsupportedVersion { format: &'static str, version: u32 },
    #[error("truncated {format} file: header promises {expected} bytes of payload, found {found}")]
    Truncated {
        format: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("dimension mismatch: expected {expected}, file has {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("invalid {field} tag {value}")]
    BadTag { field: &'static str, value: u8 },
    #[error("label parse error at row {row}, column {column}: {message}")]
    Label {
        row: usize,
        column: usize,
        message: String,
    },
    #[error("{0}")]
    Other(String),
}

#[derive(Debug, Error)]
pub enum MudasError {
    #[error("shape mismatch in {context}: expected {expected}, got {found}")]
    Shape {
        context: &'static str,
        expected: String,
        found: String,
    },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("non-finite value in {name}: {detail}")]
    NonFinite { name: String, detail: String },
    #[error("no positive labels: {0}")]
    NoPositives(&'static str),
    #[error("unsupported operation: {0}")]
    Unsupported(&'static str),
    #[error("format error in {path}: {source}")]
    Format {
        path: PathBuf,
        #[source]
        source: FormatError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl MudasError {
    pub(crate) fn shape(
        context: &'static str,
        expected: impl ToString,
        found: impl ToString,
    ) -> Self {
        MudasError::Shape {
            context,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        MudasError::InvalidConfig(msg.into())
    }

    /// Process exit code used by the CLI: 2 config, 3 data/format, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            MudasError::InvalidConfig(_) | MudasError::Unsupported(_) => 2,
            MudasError::NonFinite { .. } => 4,
            MudasError::Shape { .. }
            | MudasError::EmptyInput(_)
            | MudasError::NoPositives(_)
            | MudasError::Format { .. }
            | MudasError::Io { .. } => 3,
        }
    }
}
