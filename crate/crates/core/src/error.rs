use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid coordinate (lat={lat}, lon={lon})")]
    InvalidCoordinate { lat: f64, lon: f64 },

    #[error("invalid timestamp {0}: must be non-negative UNIX seconds")]
    InvalidTimestamp(i64),

    #[error("empty point set")]
    EmptyPointSet,

    #[error("polar region unsupported (lat={0})")]
    PolarRegion(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("missing or invalid header, expected `{expected}`")]
    MissingHeader { expected: &'static str },

    #[error("corrupt input: {malformed} of {total} records malformed")]
    CorruptInput { malformed: usize, total: usize },

    #[error("no readable trace files in {}", .0.display())]
    EmptyDirectory(PathBuf),

    #[error("duplicate feature id {0}")]
    DuplicateFeatureId(u64),

    #[error("feature store is empty")]
    EmptyStore,

    #[error("ground truth contains no user with POIs")]
    EmptyGroundTruth,

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
