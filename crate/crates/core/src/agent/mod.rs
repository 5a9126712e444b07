//! A behavior-regularized twin-critic offline learner, policy evaluation
//! and normalized scoring.

mod mlp;
mod policy;
mod td3bc;

pub use mlp::{Activation, Mlp, Tape};
pub use policy::{
    evaluate_policy, load_policy, normalized_score, save_policy, Controller, ExpertController, Policy,
};
pub use td3bc::{train_policy, train_policy_logged, Transitions};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::DataError;
use crate::seqcore::SeqError;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("invalid agent config: {0}")]
    Config(String),
    #[error("dataset has no transitions")]
    EmptyDataset,
    #[error("critic diverged at step {step}: loss {loss}")]
    Diverged { step: usize, loss: f64 },
    #[error("degenerate reference returns: random {j_random}, expert {j_expert}")]
    DegenerateReference { j_random: f64, j_expert: f64 },
    #[error("policy checkpoint: {0}")]
    Checkpoint(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] SeqError),
}

pub type Result<T> = std::result::Result<T, AgentError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub gamma: f64,
    /// Target-network smoothing rate.
    pub tau: f64,
    pub alpha_bc: f64,
    pub hidden: usize,
    pub depth: usize,
    pub steps: usize,
    pub batch_size: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    /// Target-policy smoothing noise std, as a fraction of the action half-range.
    pub policy_noise: f64,
    pub noise_clip: f64,
    pub policy_delay: usize,
    pub seed: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 0.005,
            alpha_bc: 2.5,
            hidden: 32,
            depth: 2,
            steps: 5000,
            batch_size: 128,
            actor_lr: 1e-3,
            critic_lr: 1e-3,
            policy_noise: 0.2,
            noise_clip: 0.5,
            policy_delay: 2,
            seed: 0,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(AgentError::Config(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if !(self.alpha_bc > 0.0) {
            return bad("alpha_bc must be positive");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if self.hidden == 0 || self.depth == 0 || self.batch_size == 0 || self.policy_delay == 0 {
            return bad("hidden, depth, batch_size and policy_delay must be positive");
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        if !(self.policy_noise >= 0.0 && self.noise_clip >= 0.0) {
            return bad("noise parameters must be non-negative");
        }
        Ok(())
    }
}
