use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::env::{expert_action, step_env, EnvSpec};
use super::{DataError, Result};
use crate::rng::SplitMix64;

/// Per-dimension standard deviations below this are clamped before use.
pub const STD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub terminal: bool,
    /// Step index within the source episode.
    pub t: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Collected,
    Generated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    pub source: Source,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn start_step(&self) -> usize {
        self.steps.first().map_or(0, |s| s.t)
    }

    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    /// Checks the structural invariants shared by collected and generated data.
    pub fn validate(&self, d_s: usize, d_a: usize) -> Result<()> {
        if self.steps.is_empty() {
            return Err(DataError::InvalidTrajectory("empty trajectory".into()));
        }
        if self.source == Source::Collected && self.steps[0].t != 0 {
            return Err(DataError::InvalidTrajectory(
                "collected trajectory must start at step 0".into(),
            ));
        }
        let last = self.steps.len() - 1;
        for (i, step) in self.steps.iter().enumerate() {
            if step.state.len() != d_s || step.action.len() != d_a {
                return Err(DataError::DimensionMismatch(format!(
                    "step {i}: state dim {} action dim {}, expected {d_s} and {d_a}",
                    step.state.len(),
                    step.action.len()
                )));
            }
            if step.terminal && i != last {
                return Err(DataError::InvalidTrajectory(format!(
                    "terminal flag at step {i} of {}",
                    self.steps.len()
                )));
            }
            if i > 0 && step.t != self.steps[i - 1].t + 1 {
                return Err(DataError::InvalidTrajectory(format!(
                    "step indices not contiguous at position {i}"
                )));
            }
        }
        Ok(())
    }
}

/// Normalization statistics (population moments, std floored at [`STD_FLOOR`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Statistics {
    pub state_mean: Vec<f64>,
    pub state_std: Vec<f64>,
    pub action_mean: Vec<f64>,
    pub action_std: Vec<f64>,
    pub reward_mean: f64,
    pub reward_std: f64,
}

/// Per-dimension mean and floored population std over `rows`.
pub fn moments<'a>(rows: impl Iterator<Item = &'a [f64]> + Clone, dim: usize) -> (Vec<f64>, Vec<f64>) {
    let mut n = 0usize;
    let mut mean = vec![0.0; dim];
    for row in rows.clone() {
        n += 1;
        for (m, &x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    if n == 0 {
        return (mean, vec![1.0; dim]);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; dim];
    for row in rows {
        for ((v, &x), &m) in var.iter_mut().zip(row).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    let std = var.iter().map(|v| (v / n as f64).sqrt().max(STD_FLOOR)).collect();
    (mean, std)
}

impl Statistics {
    /// Statistics over every collected step of `trajectories`.
    pub fn compute(trajectories: &[Trajectory], d_s: usize, d_a: usize) -> Self {
        let steps = || {
            trajectories
                .iter()
                .filter(|t| t.source == Source::Collected)
                .flat_map(|t| t.steps.iter())
        };
        let (state_mean, state_std) = moments(steps().map(|s| s.state.as_slice()), d_s);
        let (action_mean, action_std) = moments(steps().map(|s| s.action.as_slice()), d_a);
        let rewards: Vec<[f64; 1]> = steps().map(|s| [s.reward]).collect();
        let (reward_mean, reward_std) = moments(rewards.iter().map(|r| r.as_slice()), 1);
        Self {
            state_mean,
            state_std,
            action_mean,
            action_std,
            reward_mean: reward_mean[0],
            reward_std: reward_std[0],
        }
    }

    pub fn normalize_state(&self, state: &[f64]) -> Vec<f64> {
        state
            .iter()
            .zip(self.state_mean.iter().zip(&self.state_std))
            .map(|(&x, (&m, &s))| (x - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OfflineDataset {
    pub env_id: String,
    pub d_s: usize,
    pub d_a: usize,
    pub horizon: usize,
    pub seed: u64,
    pub trajectories: Vec<Trajectory>,
    pub stats: Statistics,
}

impl OfflineDataset {
    /// Builds a dataset of collected trajectories, computing statistics.
    pub fn from_collected(
        env: &EnvSpec,
        seed: u64,
        trajectories: Vec<Trajectory>,
    ) -> Result<Self> {
        for t in &trajectories {
            t.validate(env.d_s, env.d_a)?;
        }
        let stats = Statistics::compute(&trajectories, env.d_s, env.d_a);
        Ok(Self {
            env_id: env.env_id.clone(),
            d_s: env.d_s,
            d_a: env.d_a,
            horizon: env.horizon,
            seed,
            trajectories,
            stats,
        })
    }

    /// Wraps generated trajectories, inheriting the statistics of `original`.
    pub fn generated_from(original: &OfflineDataset, seed: u64, trajectories: Vec<Trajectory>) -> Result<Self> {
        for t in &trajectories {
            t.validate(original.d_s, original.d_a)?;
        }
        Ok(Self {
            env_id: original.env_id.clone(),
            d_s: original.d_s,
            d_a: original.d_a,
            horizon: original.horizon,
            seed,
            trajectories,
            stats: original.stats.clone(),
        })
    }

    /// The union of `self` and `augmented`; statistics stay those of the
    /// collected data.
    pub fn mixed_with(&self, augmented: &OfflineDataset) -> Result<Self> {
        if augmented.d_s != self.d_s || augmented.d_a != self.d_a {
            return Err(DataError::DimensionMismatch(
                "augmented dataset dims differ from original".into(),
            ));
        }
        let mut mixed = self.clone();
        mixed.trajectories.extend(augmented.trajectories.iter().cloned());
        Ok(mixed)
    }

    /// `|D|`: total number of steps.
    pub fn num_transitions(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    pub fn count_source(&self, source: Source) -> usize {
        self.trajectories
            .iter()
            .filter(|t| t.source == source)
            .map(Trajectory::len)
            .sum()
    }

    /// Dataset-level provenance: `collected`, `generated` or `mixed`.
    pub fn source_label(&self) -> &'static str {
        let collected = self.trajectories.iter().any(|t| t.source == Source::Collected);
        let generated = self.trajectories.iter().any(|t| t.source == Source::Generated);
        match (collected, generated) {
            (true, true) => "mixed",
            (false, true) => "generated",
            _ => "collected",
        }
    }

    pub fn mean_return(&self) -> f64 {
        if self.trajectories.is_empty() {
            return 0.0;
        }
        self.trajectories.iter().map(Trajectory::total_reward).sum::<f64>()
            / self.trajectories.len() as f64
    }
}

/// `|D_aug| / |D|` measured in transitions.
pub fn augmentation_ratio(original: &OfflineDataset, augmented: &OfflineDataset) -> Result<f64> {
    let base = original.num_transitions();
    if base == 0 {
        return Err(DataError::EmptyDataset);
    }
    Ok(augmented.num_transitions() as f64 / base as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BehaviorPolicy {
    Expert,
    /// Expert plus uniform noise in `(-0.5, 0.5)`, re-clamped.
    Medium,
    /// Alternates expert (even index) and medium (odd index) trajectories.
    MediumExpert,
    /// Per-trajectory noise half-width drawn from `{0.1, ..., 0.9}`.
    MediumReplay,
    /// Uniform over the action box.
    Random,
}

impl BehaviorPolicy {
    pub fn as_str(&self) -> &'static str {
        match self {
            BehaviorPolicy::Expert => "expert",
            BehaviorPolicy::Medium => "medium",
            BehaviorPolicy::MediumExpert => "medium_expert",
            BehaviorPolicy::MediumReplay => "medium_replay",
            BehaviorPolicy::Random => "random",
        }
    }
}

impl fmt::Display for BehaviorPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BehaviorPolicy {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "expert" => Ok(Self::Expert),
            "medium" => Ok(Self::Medium),
            "medium_expert" => Ok(Self::MediumExpert),
            "medium_replay" => Ok(Self::MediumReplay),
            "random" => Ok(Self::Random),
            other => Err(DataError::UnknownPolicy(other.to_string())),
        }
    }
}

pub(crate) fn initial_state(env: &EnvSpec, rng: &mut SplitMix64) -> Vec<f64> {
    env.init_low
        .iter()
        .zip(&env.init_high)
        .map(|(&lo, &hi)| rng.uniform(lo, hi))
        .collect()
}

/// Mean returns of the uniform-random and expert policies over
/// `episodes` episodes; episode `i` starts from stream `(seed, i)`.
pub fn reference_returns(env: &EnvSpec, episodes: usize, seed: u64) -> (f64, f64) {
    let mut random = 0.0;
    let mut expert = 0.0;
    for ep in 0..episodes as u64 {
        let mut rng = SplitMix64::stream(seed, ep);
        random += rollout_return(env, &mut rng, |_, rng| {
            env.action_low.iter().zip(&env.action_high).map(|(&lo, &hi)| rng.uniform(lo, hi)).collect()
        });
        let mut rng = SplitMix64::stream(seed, ep);
        expert += rollout_return(env, &mut rng, |s, _| expert_action(s));
    }
    (random / episodes as f64, expert / episodes as f64)
}

/// Runs one full episode and returns the undiscounted return.
pub(crate) fn rollout_return(
    env: &EnvSpec,
    rng: &mut SplitMix64,
    mut act: impl FnMut(&[f64], &mut SplitMix64) -> Vec<f64>,
) -> f64 {
    let mut state = initial_state(env, rng);
    let mut total = 0.0;
    for _ in 0..env.horizon {
        let action = act(&state, rng);
        let out = step_env(env, &state, &action).expect("in-bounds rollout");
        total += out.reward;
        state = out.next_state;
    }
    total
}

fn noisy_expert(state: &[f64], scale: f64, rng: &mut SplitMix64) -> Vec<f64> {
    expert_action(state)
        .into_iter()
        .map(|a| (a + rng.uniform(-scale, scale)).clamp(-1.0, 1.0))
        .collect()
}

fn collect_trajectory(env: &EnvSpec, policy: BehaviorPolicy, index: u64, seed: u64) -> Trajectory {
    let mut rng = SplitMix64::stream(seed, index);
    let mut state = initial_state(env, &mut rng);
    let noise = match policy {
        BehaviorPolicy::Expert => 0.0,
        BehaviorPolicy::Medium => 0.5,
        BehaviorPolicy::MediumExpert if index % 2 == 0 => 0.0,
        BehaviorPolicy::MediumExpert => 0.5,
        BehaviorPolicy::MediumReplay => (rng.below(9) + 1) as f64 / 10.0,
        BehaviorPolicy::Random => f64::NAN,
    };
    let mut steps = Vec::with_capacity(env.horizon);
    for t in 0..env.horizon {
        let action = if policy == BehaviorPolicy::Random {
            env.action_low
                .iter()
                .zip(&env.action_high)
                .map(|(&lo, &hi)| rng.uniform(lo, hi))
                .collect()
        } else if noise == 0.0 {
            expert_action(&state)
        } else {
            noisy_expert(&state, noise, &mut rng)
        };
        let out = step_env(env, &state, &action).expect("collected states stay in bounds");
        steps.push(Step {
            state: std::mem::replace(&mut state, out.next_state),
            action,
            reward: out.reward,
            terminal: t + 1 == env.horizon,
            t,
        });
    }
    Trajectory { steps, source: Source::Collected }
}

/// Rolls out `n_traj` full-length episodes of `policy`. Trajectory `i` draws
/// from its own stream keyed by `(seed, i)`.
pub fn collect_dataset(
    env: &EnvSpec,
    policy: BehaviorPolicy,
    n_traj: usize,
    seed: u64,
) -> Result<OfflineDataset> {
    if n_traj == 0 {
        return Err(DataError::InvalidArgument("n_traj must be at least 1".into()));
    }
    let trajectories = (0..n_traj as u64)
        .map(|i| collect_trajectory(env, policy, i, seed))
        .collect();
    OfflineDataset::from_collected(env, seed, trajectories)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn medium_dataset_shape() {
        let env = EnvSpec::line_reach();
        let d = collect_dataset(&env, BehaviorPolicy::Medium, 10, 7).unwrap();
        assert_eq!(d.trajectories.len(), 10);
        for t in &d.trajectories {
            assert_eq!(t.len(), 50);
            assert!(t.steps.last().unwrap().terminal);
            assert!(t.steps[..49].iter().all(|s| !s.terminal));
            assert!(t.steps.iter().enumerate().all(|(i, s)| s.t == i));
        }
        assert_eq!(d.num_transitions(), 500);
    }

    #[test]
    fn expert_dataset_matches_reference_return() {
        let env = EnvSpec::line_reach();
        for seed in [1, 99, 12345] {
            let d = collect_dataset(&env, BehaviorPolicy::Expert, 100, seed).unwrap();
            let ratio = d.mean_return() / env.j_expert;
            assert!((0.9..=1.1).contains(&ratio), "seed {seed}: ratio {ratio}");
        }
    }

    #[test]
    fn medium_expert_alternates() {
        let env = EnvSpec::line_reach();
        let mixed = collect_dataset(&env, BehaviorPolicy::MediumExpert, 4, 3).unwrap();
        let expert = collect_dataset(&env, BehaviorPolicy::Expert, 4, 3).unwrap();
        assert_eq!(mixed.trajectories[0].steps[0].state, expert.trajectories[0].steps[0].state);
        assert_eq!(mixed.trajectories[0], expert.trajectories[0]);
        assert_ne!(mixed.trajectories[1], expert.trajectories[1]);
    }

    #[test]
    fn statistics_match_recomputation() {
        let env = EnvSpec::line_reach();
        let d = collect_dataset(&env, BehaviorPolicy::MediumReplay, 20, 5).unwrap();
        let n = d.num_transitions() as f64;
        let steps: Vec<&Step> = d.trajectories.iter().flat_map(|t| &t.steps).collect();
        for k in 0..2 {
            let mean = steps.iter().map(|s| s.state[k]).sum::<f64>() / n;
            let var = steps.iter().map(|s| (s.state[k] - mean).powi(2)).sum::<f64>() / n;
            assert!((mean - d.stats.state_mean[k]).abs() < 1e-12);
            assert!((var.sqrt() - d.stats.state_std[k]).abs() < 1e-12);
        }
        let rmean = steps.iter().map(|s| s.reward).sum::<f64>() / n;
        assert!((rmean - d.stats.reward_mean).abs() < 1e-12);
    }

    #[test]
    fn constant_dimension_std_is_floored() {
        let env = EnvSpec::line_reach();
        let steps = (0..3)
            .map(|t| Step { state: vec![0.5, 0.0], action: vec![0.0], reward: 0.0, terminal: t == 2, t })
            .collect();
        let d = OfflineDataset::from_collected(&env, 0, vec![Trajectory { steps, source: Source::Collected }])
            .unwrap();
        assert_eq!(d.stats.state_std, vec![STD_FLOOR, STD_FLOOR]);
        assert_eq!(d.stats.reward_std, STD_FLOOR);
    }

    #[test]
    fn ratio_definition() {
        let env = EnvSpec::line_reach();
        let d = collect_dataset(&env, BehaviorPolicy::Medium, 100, 1).unwrap();
        assert_eq!(d.num_transitions(), 5000);
        let gen_traj: Vec<Trajectory> = d.trajectories[..10]
            .iter()
            .map(|t| {
                let mut t = t.clone();
                t.source = Source::Generated;
                t
            })
            .collect();
        let aug = OfflineDataset::generated_from(&d, 0, gen_traj).unwrap();
        assert_eq!(augmentation_ratio(&d, &aug).unwrap(), 0.1);
        let empty = OfflineDataset::generated_from(&d, 0, vec![]).unwrap();
        assert_eq!(augmentation_ratio(&d, &empty).unwrap(), 0.0);
        assert_eq!(augmentation_ratio(&empty, &d).unwrap_err().code(), "E_EMPTY");
    }

    #[test]
    fn policy_names() {
        assert_eq!("medium_replay".parse::<BehaviorPolicy>().unwrap(), BehaviorPolicy::MediumReplay);
        assert_eq!("bogus".parse::<BehaviorPolicy>().unwrap_err().code(), "E_POLICY");
        assert_eq!(
            collect_dataset(&EnvSpec::line_reach(), BehaviorPolicy::Expert, 0, 1).unwrap_err().code(),
            "E_ARG"
        );
    }

    #[test]
    fn terminal_in_the_middle_is_invalid() {
        let steps = (0..3)
            .map(|t| Step { state: vec![0.0, 0.0], action: vec![0.0], reward: 0.0, terminal: t == 1, t })
            .collect();
        let t = Trajectory { steps, source: Source::Collected };
        assert_eq!(t.validate(2, 1).unwrap_err().code(), "E_TRAJECTORY");
    }
}
