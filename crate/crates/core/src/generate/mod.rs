//! Segment selection and perturbed-action rollouts through a world model.

mod rollout;
mod select;

pub use rollout::{
    generate, perturb_action, rollout_segment, GeneratedTrajectory, StepPrediction, WorldSimulator,
};
pub use select::{
    num_segments, select_random, select_segments, select_softmax, select_top_n, softmax_probabilities,
    split_segments, Segment,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seqcore::SeqError;
use crate::worldtrain::WorldError;

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error("invalid generation config: {0}")]
    Config(String),
    #[error("requested {requested} segments but only {available} are available")]
    NotEnoughSegments { requested: usize, available: usize },
    #[error("invalid segment: {0}")]
    InvalidSegment(String),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Model(#[from] SeqError),
}

pub type Result<T> = std::result::Result<T, GenerateError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Random,
    TopN,
    Softmax,
}

impl Strategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::TopN => "top_n",
            Strategy::Softmax => "softmax",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = GenerateError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Strategy::Random),
            "top_n" => Ok(Strategy::TopN),
            "softmax" => Ok(Strategy::Softmax),
            other => Err(GenerateError::Config(format!("unknown strategy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub strategy: Strategy,
    /// Rollout length `h`.
    pub horizon: usize,
    /// Half-width of the uniform action perturbation.
    pub epsilon: f64,
    /// Target `|D_aug| / |D|`.
    pub ratio: f64,
    /// Softmax temperature over segment returns.
    pub selection_temperature: f64,
    /// Standardize segment returns before the softmax.
    pub zscore_returns: bool,
    pub seed: u64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Softmax,
            horizon: 50,
            epsilon: 0.1,
            ratio: 0.1,
            selection_temperature: 1.0,
            zscore_returns: true,
            seed: 0,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon < 2 {
            return Err(GenerateError::Config("horizon must be at least 2".into()));
        }
        if !(self.epsilon >= 0.0) {
            return Err(GenerateError::Config("epsilon must be non-negative".into()));
        }
        if !(self.ratio > 0.0) {
            return Err(GenerateError::Config("ratio must be positive".into()));
        }
        if !(self.selection_temperature > 0.0) {
            return Err(GenerateError::Config("selection temperature must be positive".into()));
        }
        Ok(())
    }
}
