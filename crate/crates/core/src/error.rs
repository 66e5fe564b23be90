use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: expected {expected}, got {got}")]
    Dimension {
        op: &'static str,
        expected: String,
        got: String,
    },

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    /// An operation was called in the wrong lifecycle state, e.g. backward
    /// before forward.
    #[error("invalid state: {0}")]
    State(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("zero-norm vector in {0}")]
    ZeroNorm(&'static str),

    #[error("expert `{0}` has no class centroids")]
    MissingCentroids(String),

    #[error("class {class} has a zero-norm centroid")]
    ZeroNormCentroid { class: u32 },

    #[error("registry is empty")]
    EmptyRegistry,

    #[error("expert `{0}` is already registered")]
    DuplicateExpert(String),

    #[error("unknown expert `{0}`")]
    UnknownExpert(String),

    #[error(transparent)]
    Format(#[from] FormatError),

    #[error(transparent)]
    Idx(#[from] IdxError),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn dim(op: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        Error::Dimension {
            op,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub(crate) fn file(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }
}

/// Failures reading a registry file.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormatError {
    #[error("not a registry file (magic {found:02x?})")]
    BadMagic { found: [u8; 4] },

    #[error("unsupported registry format version {found} (this build reads version {supported})")]
    Version { found: u32, supported: u32 },

    #[error("registry truncated: needed {needed} bytes at offset {offset}, file has {len}")]
    Truncated { offset: usize, needed: usize, len: usize },

    #[error("registry checksum mismatch: stored {stored:#018x}, computed {computed:#018x}")]
    Checksum { stored: u64, computed: u64 },

    #[error("malformed registry: {0}")]
    Malformed(String),
}

/// Failures parsing IDX image/label files.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum IdxError {
    #[error("bad IDX magic at offset {offset}: found {found:#010x}, expected {expected:#010x}")]
    BadMagic { offset: usize, found: u32, expected: u32 },

    #[error("IDX payload truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("IDX image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },
}
