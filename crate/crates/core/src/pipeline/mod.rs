//! Config-driven experiment runs: collect, train the world ensemble,
//! generate, correct, mix, train a policy and evaluate, once per seed.

mod compare;
mod config;
mod run;

pub use compare::{compare_modes, Comparison, ComparisonRow};
pub use config::{DatasetSpec, ExperimentConfig, Mode, CONFIG_VERSION};
pub use run::{
    run_experiment, run_experiment_cached, stage_collect, stage_evaluate, stage_generate, stage_train_policy,
    stage_train_world, metrics_record, ArtifactCache, ExperimentReport, SeedResult, METRICS_HEADER,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error("stage `{stage}` failed: {message}")]
    Stage { stage: &'static str, message: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, PipelineError>;

pub(crate) fn stage<E: std::fmt::Display>(stage: &'static str) -> impl FnOnce(E) -> PipelineError {
    move |e| PipelineError::Stage { stage, message: e.to_string() }
}
