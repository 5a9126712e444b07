//! Snapshot-ensemble training of the state and reward sequence models under a
//! warmup-plus-cyclic-cosine learning rate, and ensemble mean/std queries.

mod bundle;
mod schedule;
mod train;

pub use bundle::{load_bundle, mean_and_std, save_bundle, EnsembleBundle, WorldNorm};
pub use schedule::{lr_at, LRSchedule};
pub use train::{
    train_snapshots, train_world_ensemble, TrainingData, TrainingReport, WorldTrainConfig,
};

use thiserror::Error;

use crate::data::DataError;
use crate::seqcore::SeqError;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error(transparent)]
    Model(#[from] SeqError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("dataset too small: {0}")]
    DatasetTooSmall(String),
    #[error("non-finite loss at step {step} of the {head} run (lr {lr:e})")]
    NonFiniteLoss { head: String, step: usize, lr: f64 },
    #[error("empty ensemble")]
    EmptyEnsemble,
    #[error("invalid config: {0}")]
    Config(String),
    #[error("bundle io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt bundle: {0}")]
    Corrupt(String),
}

pub type Result<T> = std::result::Result<T, WorldError>;
