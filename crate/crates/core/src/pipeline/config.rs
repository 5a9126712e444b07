use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{PipelineError, Result};
use crate::agent::AgentConfig;
use crate::data::{BehaviorPolicy, EnvSpec};
use crate::evaluator::EvaluatorConfig;
use crate::generate::{GenerationConfig, Strategy};
use crate::worldtrain::WorldTrainConfig;

pub const CONFIG_VERSION: u32 = 1;

/// Ablation variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// No augmentation.
    Original,
    /// Last snapshot of each ensemble, no correction.
    Single,
    /// Full ensembles, no correction.
    NoCorrect,
    /// Full ensembles with the reward correction.
    Otto,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Original, Mode::Single, Mode::NoCorrect, Mode::Otto];

    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Original => "original",
            Mode::Single => "single",
            Mode::NoCorrect => "no_correct",
            Mode::Otto => "otto",
        }
    }

    pub fn generates(&self) -> bool {
        *self != Mode::Original
    }

    pub fn corrects(&self) -> bool {
        *self == Mode::Otto
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| PipelineError::Config(format!("unknown mode `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub policy: BehaviorPolicy,
    pub n_traj: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub format_version: u32,
    pub env_id: String,
    pub dataset: DatasetSpec,
    pub world: WorldTrainConfig,
    pub generation: GenerationConfig,
    pub evaluator: EvaluatorConfig,
    pub agent: AgentConfig,
    pub mode: Mode,
    pub eval_episodes: usize,
    pub seeds: Vec<u64>,
    /// Fill the `wall_seconds` metrics column. Off by default so that
    /// metrics files are reproducible byte for byte.
    #[serde(default)]
    pub record_wall_time: bool,
}

impl ExperimentConfig {
    /// 200 medium trajectories, the short world-model schedule, softmax
    /// selection with `h = 10`, `epsilon = 0.1`, `delta = 0.1`,
    /// `omega = 0.7` and five seeds.
    pub fn new(env_id: &str, mode: Mode) -> Result<Self> {
        let env = EnvSpec::from_id(env_id).map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(Self {
            format_version: CONFIG_VERSION,
            env_id: env.env_id.clone(),
            dataset: DatasetSpec { policy: BehaviorPolicy::Medium, n_traj: 200, seed: 0 },
            world: WorldTrainConfig::quick(env.d_s, env.d_a, env.horizon, 0),
            generation: GenerationConfig {
                strategy: Strategy::Softmax,
                horizon: 10,
                epsilon: 0.1,
                ratio: 0.1,
                ..GenerationConfig::default()
            },
            evaluator: EvaluatorConfig::default(),
            agent: AgentConfig::default(),
            mode,
            eval_episodes: 100,
            seeds: (0..5).collect(),
            record_wall_time: false,
        })
    }

    pub fn with_mode(&self, mode: Mode) -> Self {
        Self { mode, ..self.clone() }
    }

    pub fn env(&self) -> Result<EnvSpec> {
        EnvSpec::from_id(&self.env_id).map_err(|e| PipelineError::Config(e.to_string()))
    }

    /// `{env}-{policy}-{mode}`.
    pub fn run_id(&self) -> String {
        format!("{}-{}-{}", self.env_id, self.dataset.policy, self.mode)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.format_version != CONFIG_VERSION {
            return bad(format!("unsupported format_version {}", self.format_version));
        }
        let env = self.env()?;
        if self.world.arch.d_s != env.d_s || self.world.arch.d_a != env.d_a {
            return bad("world model dims do not match the environment".into());
        }
        if self.dataset.n_traj == 0 {
            return bad("dataset.n_traj must be at least 1".into());
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.eval_episodes == 0 {
            return bad("eval_episodes must be at least 1".into());
        }
        self.world.state_schedule.validate().map_err(PipelineError::Config)?;
        self.world.reward_schedule.validate().map_err(PipelineError::Config)?;
        self.world.arch.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.generation.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.evaluator.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.agent.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|source| PipelineError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json() + "\n")
            .map_err(|source| PipelineError::Io { path: path.display().to_string(), source })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        for mode in Mode::ALL {
            let cfg = ExperimentConfig::new("SparseReach", mode).unwrap();
            assert_eq!(ExperimentConfig::from_json(&cfg.to_json()).unwrap(), cfg);
        }
    }

    #[test]
    fn defaults_are_materialized() {
        let cfg = ExperimentConfig::new("LineReach", Mode::Otto).unwrap();
        let v: serde_json::Value = serde_json::from_str(&cfg.to_json()).unwrap();
        assert_eq!(v["generation"]["selection_temperature"], 1.0);
        assert_eq!(v["evaluator"]["omega"], 0.7);
        assert_eq!(v["agent"]["alpha_bc"], 2.5);
        assert_eq!(v["world"]["state_schedule"]["n_cycles"], 4);
        assert_eq!(v["format_version"], 1);
    }

    #[test]
    fn rejects_invalid_configs() {
        let base = ExperimentConfig::new("LineReach", Mode::Otto).unwrap();
        let mut c = base.clone();
        c.seeds.clear();
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.env_id = "Nowhere".into();
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.generation.horizon = 1;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.evaluator.omega = 0.0;
        assert!(c.validate().is_err());
        let mut c = base;
        c.format_version = 9;
        assert!(ExperimentConfig::from_json(&c.to_json()).is_err());
        assert!(ExperimentConfig::from_json("{").is_err());
    }

    #[test]
    fn mode_names() {
        for m in Mode::ALL {
            assert_eq!(m.as_str().parse::<Mode>().unwrap(), m);
        }
        assert!("both".parse::<Mode>().is_err());
    }
}
