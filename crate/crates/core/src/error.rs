use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown crop preset `{0}`")]
    UnknownPreset(String),

    #[error("lane index {index} out of range: world has {lanes} lanes")]
    LaneOutOfRange { index: usize, lanes: usize },

    #[error("dimension mismatch: expected {expected_width}x{expected_height}, got {width}x{height}")]
    DimensionMismatch {
        expected_width: usize,
        expected_height: usize,
        width: usize,
        height: usize,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("missing file {0}")]
    MissingFile(PathBuf),

    #[error("malformed image {path}: {reason}")]
    MalformedImage { path: PathBuf, reason: String },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("cluster has {0} points; a line fit needs at least 2")]
    DegenerateCluster(usize),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
