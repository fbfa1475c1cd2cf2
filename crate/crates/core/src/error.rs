use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the DPT container codec.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad magic bytes {found:?}, expected \"DPTF\"")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u32),
    #[error("unsupported dtype tag {0}")]
    UnsupportedDtype(u8),
    #[error("truncated record: needed {needed} bytes, {available} available")]
    Truncated { needed: usize, available: usize },
    #[error("extent/payload mismatch: {0}")]
    LengthMismatch(String),
    #[error("payload checksum mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    Checksum { stored: u32, computed: u32 },
    #[error("malformed architecture header: {0}")]
    BadHeader(String),
    #[error("trailing bytes after last record")]
    TrailingBytes,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("invalid argument to {op}: {detail}")]
    InvalidArgument { op: &'static str, detail: String },
    #[error("variable does not belong to this tape")]
    NotOnTape,
    #[error("backward root must be a scalar, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("architecture mismatch: {0}")]
    ArchitectureMismatch(String),
    #[error("format error in {path}: {source}")]
    Format {
        path: PathBuf,
        #[source]
        source: FormatError,
    },
    #[error("{0}")]
    Decode(#[from] FormatError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape { op, detail: detail.into() }
    }

    pub(crate) fn invalid(op: &'static str, detail: impl Into<String>) -> Self {
        Error::InvalidArgument { op, detail: detail.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
