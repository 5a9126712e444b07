//! A small causal transformer over interleaved `(state, action)` tokens with
//! hand-written reverse-mode gradients, an MSE objective and AdamW.
//!
//! Everything is `f64`. Parameters live in one flat vector whose named layout
//! is fixed by [`ModelConfig`]; gradients and optimizer moments use the same
//! layout so they can be treated as plain vectors.

mod checkpoint;
mod layout;
mod model;
mod ops;
mod optim;

pub use checkpoint::{load_model, read_weights, save_model, write_weights, Checkpoint};
pub use layout::{Layout, Segment};
pub use model::{loss_mse, HeadKind, ModelConfig, Predictions, Sample, SequenceModel, TokenWindow};
pub use optim::{clip_gradients, optimizer_step, OptimizerState};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SeqError {
    #[error("window has {got} steps but context length is {max}")]
    WindowTooLong { got: usize, max: usize },
    #[error("invalid window: {0}")]
    InvalidWindow(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("no unmasked positions in loss")]
    EmptyMask,
    #[error("empty batch")]
    EmptyBatch,
    #[error("non-finite activation in layer `{layer}`")]
    NonFinite { layer: String },
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("invalid config: {0}")]
    Config(String),
    #[error("checkpoint io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt checkpoint: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, SeqError>;
