use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("{path}: bad magic bytes {found:?}")]
    BadMagic { path: PathBuf, found: [u8; 4] },

    #[error("{path}: truncated file (expected {expected} bytes, found {found})")]
    Truncated {
        path: PathBuf,
        expected: u64,
        found: u64,
    },

    #[error("{path}: dimension mismatch: {detail}")]
    DimensionMismatch { path: PathBuf, detail: String },

    #[error("{path}: negative pressure {value} at flat index {index}")]
    NegativePressure {
        path: PathBuf,
        index: usize,
        value: f32,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("manifest: {0}")]
    Manifest(String),

    #[error("empty split: {0}")]
    EmptySplit(String),

    #[error("missing limb statistics: skeleton has {expected} limbs, stats cover {found}")]
    MissingLimbStats { expected: usize, found: usize },

    #[error("zero head limb length in frame {frame}")]
    ZeroHeadLimb { frame: usize },

    #[error("mask has no masked tokens; reconstruction loss is undefined")]
    EmptyMask,

    #[error("mask ratio {0} outside (0, 1)")]
    MaskRatio(f64),

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("NaN gradient for parameter {0}")]
    NanGradient(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("missing prerequisite checkpoint: {0}")]
    MissingPrerequisite(PathBuf),

    #[error("synthetic data: {0}")]
    Synth(String),

    #[error("run directory {0} is locked by another writer")]
    Locked(PathBuf),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the filesystem rather than by content.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::Locked(_))
    }
}
