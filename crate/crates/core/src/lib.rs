//! Offline trajectory augmentation with snapshot-ensemble sequence world models.
//!
//! The crate is organised as a pipeline:
//!
//! - [`data`]: toy control environments, behavior policies, the trajectory
//!   data model and its on-disk format.
//! - [`seqcore`]: a small causal transformer with hand-written reverse-mode
//!   gradients and an AdamW optimizer.
//! - [`worldtrain`]: cyclic-annealing snapshot training of state and reward
//!   model ensembles.
//! - [`generate`]: segment selection and perturbed-action rollouts through an
//!   ensemble.
//! - [`evaluator`]: uncertainty-based reward correction of generated rollouts.
//! - [`agent`]: a behavior-regularized twin-critic offline learner with
//!   evaluation and normalized scoring.
//! - [`pipeline`]: experiment configuration, end-to-end runs and ablation
//!   comparisons.

pub mod agent;
pub mod data;
pub mod evaluator;
pub mod generate;
pub mod pipeline;
pub mod rng;
pub mod seqcore;
pub mod worldtrain;

pub use data::{EnvSpec, OfflineDataset, Step, Trajectory};
pub use rng::SplitMix64;
