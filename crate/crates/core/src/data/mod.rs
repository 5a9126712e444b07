//! Toy control environments, behavior policies and the offline dataset model.

mod dataset;
mod env;
mod io;

pub use dataset::{
    augmentation_ratio, collect_dataset, moments as dataset_moments, reference_returns, BehaviorPolicy, OfflineDataset, Source, Statistics, Step,
    Trajectory, STD_FLOOR,
};
pub use env::{
    expert_action, step_env, EnvKind, EnvSpec, StepOutcome, REFERENCE_EPISODES, REFERENCE_SEED,
};
pub(crate) use dataset::rollout_return;
pub use io::{read_dataset, write_dataset, DatasetMeta, FORMAT_VERSION};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt header: {0}")]
    CorruptHeader(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("payload shape error: expected {expected} bytes, found {found}")]
    PayloadShape { expected: usize, found: usize },
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("unknown behavior policy `{0}`")]
    UnknownPolicy(String),
    #[error("unknown environment `{0}`")]
    UnknownEnv(String),
    #[error("state {0:?} outside environment bounds")]
    StateOutOfBounds(Vec<f64>),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl DataError {
    /// Stable machine-readable code for each failure class.
    pub fn code(&self) -> &'static str {
        match self {
            DataError::Io { .. } => "E_IO",
            DataError::CorruptHeader(_) => "E_HEADER",
            DataError::DimensionMismatch(_) => "E_DIM",
            DataError::TruncatedPayload { .. } => "E_TRUNCATED",
            DataError::PayloadShape { .. } => "E_SHAPE",
            DataError::InvalidTrajectory(_) => "E_TRAJECTORY",
            DataError::UnknownPolicy(_) => "E_POLICY",
            DataError::UnknownEnv(_) => "E_ENV",
            DataError::StateOutOfBounds(_) => "E_STATE",
            DataError::EmptyDataset => "E_EMPTY",
            DataError::InvalidArgument(_) => "E_ARG",
        }
    }
}

pub type Result<T> = std::result::Result<T, DataError>;
