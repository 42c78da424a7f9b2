use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: PNG decode failed: {message}")]
    PngDecode { path: PathBuf, message: String },

    #[error("{path}: PNG encode failed: {message}")]
    PngEncode { path: PathBuf, message: String },

    #[error("{path}: expected {expected}-bit grayscale PNG, found {found}")]
    WrongPixelFormat {
        path: PathBuf,
        expected: u8,
        found: String,
    },

    #[error("{what} out of range: value {value} at (row {row}, col {col})")]
    LabelOutOfRange {
        what: &'static str,
        value: u32,
        row: usize,
        col: usize,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("tensor is not normalized at (row {row}, col {col}): {reason}")]
    NotNormalized {
        row: usize,
        col: usize,
        reason: String,
    },

    #[error("{path}: bad tensor header: {message}")]
    TensorHeader { path: PathBuf, message: String },

    #[error("{path}: payload is {found} bytes, header implies {expected}")]
    PayloadSize {
        path: PathBuf,
        expected: u64,
        found: u64,
    },

    #[error("counts CSV {path}, row {row}: {message}")]
    CountsCsv {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("direction map disagrees with class map background at (row {row}, col {col})")]
    InconsistentBackground { row: usize, col: usize },

    #[error("instance {instance} covers background class pixel at (row {row}, col {col})")]
    InstanceOnBackground {
        instance: u16,
        row: usize,
        col: usize,
    },

    #[error("more than 65535 instances in one image")]
    TooManyInstances,

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("centroid of an empty pixel set")]
    EmptyPixelSet,

    #[error("packing failed: {0}")]
    PackingFailed(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
