use thiserror::Error;

use crate::{ComponentId, LearnerId, SampleId};

pub type Result<T, E = CoreError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("non-finite value at row {row}, column {column}")]
    NonFinite { row: usize, column: String },
    #[error("out-of-order tick {tick}: stream is already at tick {end_tick}")]
    OutOfOrder { tick: i64, end_tick: i64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unknown sample id {0}")]
    UnknownSample(SampleId),
    #[error("sample {0} has no label")]
    Unlabeled(SampleId),
    #[error("unknown component id {0}")]
    UnknownComponent(ComponentId),
    #[error("unknown learner id {0}")]
    UnknownLearner(LearnerId),
    #[error("unknown sample set {0:?}")]
    UnknownSampleSet(String),
    #[error("EM failed for every candidate component count")]
    EmFailed,
    #[error("projection diverged: {0}")]
    Diverged(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("ensemble has no members")]
    EmptyEnsemble,
    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
    #[error("no projection has been computed yet")]
    NoProjection,
    #[error("update period not elapsed: last update at tick {last}, period {period}")]
    TooSoon { last: i64, period: i64 },
    #[error("unsupported session schema {0:?}")]
    SchemaVersion(String),
}
