use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimensions {height}x{width}")]
    InvalidDimensions { height: usize, width: usize },

    #[error("buffer length {got} does not match {height}x{width}x{channels}")]
    BufferLength {
        height: usize,
        width: usize,
        channels: usize,
        got: usize,
    },

    #[error("{stage} stage: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("value {value} at index {index} outside {expected}")]
    OutOfRange {
        index: usize,
        value: f64,
        expected: &'static str,
    },

    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed image: {cause}")]
    Decode { path: PathBuf, cause: String },

    #[error("{path}: unsupported image: {cause}")]
    Unsupported { path: PathBuf, cause: String },

    #[error("{path}: cannot write image: {cause}")]
    Encode { path: PathBuf, cause: String },

    #[error("invalid thresholds: low {low}, high {high} (need 0 < low < high < 1)")]
    InvalidThresholds { low: f64, high: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("map {height}x{width} is smaller than the {window}x{window} window")]
    WindowTooLarge {
        height: usize,
        width: usize,
        window: usize,
    },

    #[error("ground truth has no foreground pixels")]
    EmptyForeground,

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("graph error: {0}")]
    Graph(String),

    #[error("non-finite {what} at step {step}")]
    Diverged { what: String, step: u64 },

    #[error("checkpoint {path}: {cause}")]
    Checkpoint { path: PathBuf, cause: String },

    #[error("dataset: {0}")]
    Dataset(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps `self` with the name of the processing stage that failed.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True for failures caused by the filesystem or file contents.
    pub fn is_io(&self) -> bool {
        if let Error::Stage { source, .. } = self {
            return source.is_io();
        }
        matches!(
            self,
            Error::Io { .. }
                | Error::Decode { .. }
                | Error::Unsupported { .. }
                | Error::Encode { .. }
                | Error::Checkpoint { .. }
                | Error::Dataset(_)
        )
    }

    /// True for numerical failures (divergence, non-finite data).
    pub fn is_numeric(&self) -> bool {
        if let Error::Stage { source, .. } = self {
            return source.is_numeric();
        }
        matches!(
            self,
            Error::NonFinite { .. } | Error::Diverged { .. } | Error::EmptyForeground
        )
    }
}
