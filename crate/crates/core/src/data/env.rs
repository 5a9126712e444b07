use serde::{Deserialize, Serialize};

use super::{DataError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnvKind {
    /// Dense reward `-|x' - 1|`.
    LineReach,
    /// Reward 1 inside the goal band `|x' - 1| <= 0.1`, else 0.
    SparseReach,
}

/// A one-dimensional point mass that must reach `x = 1`.
///
/// State is `(position, velocity)`, the single action is an acceleration in
/// `[-1, 1]`. Episodes last exactly `horizon` steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub env_id: String,
    pub kind: EnvKind,
    pub d_s: usize,
    pub d_a: usize,
    pub horizon: usize,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    pub state_low: Vec<f64>,
    pub state_high: Vec<f64>,
    /// Initial states are drawn uniformly from `[init_low, init_high]`.
    pub init_low: Vec<f64>,
    pub init_high: Vec<f64>,
    /// Mean return of the uniform-random policy (1000 episodes, seed 0).
    pub j_random: f64,
    /// Mean return of the expert controller (1000 episodes, seed 0).
    pub j_expert: f64,
}

pub const GOAL: f64 = 1.0;
pub const GOAL_BAND: f64 = 0.1;
pub const REFERENCE_EPISODES: usize = 1000;
pub const REFERENCE_SEED: u64 = 0;

impl EnvSpec {
    fn point_mass(env_id: &str, kind: EnvKind, j_random: f64, j_expert: f64) -> Self {
        Self {
            env_id: env_id.to_string(),
            kind,
            d_s: 2,
            d_a: 1,
            horizon: 50,
            action_low: vec![-1.0],
            action_high: vec![1.0],
            state_low: vec![-2.0, -1.0],
            state_high: vec![2.0, 1.0],
            init_low: vec![-1.0, -0.1],
            init_high: vec![0.0, 0.1],
            j_random,
            j_expert,
        }
    }

    pub fn line_reach() -> Self {
        Self::point_mass("LineReach", EnvKind::LineReach, LINE_REACH_J_RANDOM, LINE_REACH_J_EXPERT)
    }

    pub fn sparse_reach() -> Self {
        Self::point_mass(
            "SparseReach",
            EnvKind::SparseReach,
            SPARSE_REACH_J_RANDOM,
            SPARSE_REACH_J_EXPERT,
        )
    }

    pub fn from_id(env_id: &str) -> Result<Self> {
        match env_id {
            "LineReach" => Ok(Self::line_reach()),
            "SparseReach" => Ok(Self::sparse_reach()),
            other => Err(DataError::UnknownEnv(other.to_string())),
        }
    }

    pub fn clamp_action(&self, action: &[f64]) -> Vec<f64> {
        action
            .iter()
            .zip(self.action_low.iter().zip(&self.action_high))
            .map(|(&a, (&lo, &hi))| a.clamp(lo, hi))
            .collect()
    }

    pub fn reward(&self, next_position: f64) -> f64 {
        let dist = (next_position - GOAL).abs();
        match self.kind {
            EnvKind::LineReach => -dist,
            EnvKind::SparseReach => {
                if dist <= GOAL_BAND {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

// Measured with `reference_returns(env, REFERENCE_EPISODES, REFERENCE_SEED)`.
const LINE_REACH_J_RANDOM: f64 = -77.656_042_033_223_24;
const LINE_REACH_J_EXPERT: f64 = -18.831_185_843_577_035;
const SPARSE_REACH_J_RANDOM: f64 = 0.923;
const SPARSE_REACH_J_EXPERT: f64 = 13.594;

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_state: Vec<f64>,
    pub reward: f64,
    /// Always false: episodes end on the step counter, which the caller owns.
    pub terminal: bool,
}

/// Advance the point mass by one step.
///
/// `v' = clamp(v + 0.2 a, -1, 1)`, `x' = clamp(x + 0.1 v', -2, 2)`.
pub fn step_env(env: &EnvSpec, state: &[f64], action: &[f64]) -> Result<StepOutcome> {
    if state.len() != env.d_s || action.len() != env.d_a {
        return Err(DataError::DimensionMismatch(format!(
            "expected state dim {} and action dim {}, got {} and {}",
            env.d_s,
            env.d_a,
            state.len(),
            action.len()
        )));
    }
    let in_bounds = state
        .iter()
        .zip(env.state_low.iter().zip(&env.state_high))
        .all(|(&s, (&lo, &hi))| s >= lo && s <= hi);
    if !in_bounds {
        return Err(DataError::StateOutOfBounds(state.to_vec()));
    }
    let a = env.clamp_action(action)[0];
    let v = (state[1] + 0.2 * a).clamp(env.state_low[1], env.state_high[1]);
    let x = (state[0] + 0.1 * v).clamp(env.state_low[0], env.state_high[0]);
    Ok(StepOutcome { next_state: vec![x, v], reward: env.reward(x), terminal: false })
}

/// The proportional-derivative expert: `clamp(1.5 (1 - x) - 0.5 v, -1, 1)`.
pub fn expert_action(state: &[f64]) -> Vec<f64> {
    vec![(1.5 * (GOAL - state[0]) - 0.5 * state[1]).clamp(-1.0, 1.0)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::reference_returns;

    #[test]
    fn reference_returns_match_constants() {
        for env in [EnvSpec::line_reach(), EnvSpec::sparse_reach()] {
            let (random, expert) = reference_returns(&env, REFERENCE_EPISODES, REFERENCE_SEED);
            assert!((random - env.j_random).abs() < 1e-9, "{} random {random}", env.env_id);
            assert!((expert - env.j_expert).abs() < 1e-9, "{} expert {expert}", env.env_id);
            assert!(env.j_expert > env.j_random);
        }
    }

    #[test]
    fn line_reach_worked_steps() {
        let env = EnvSpec::line_reach();
        let out = step_env(&env, &[0.0, 0.0], &[1.0]).unwrap();
        assert!((out.next_state[0] - 0.02).abs() < 1e-15);
        assert!((out.next_state[1] - 0.2).abs() < 1e-15);
        assert!((out.reward + 0.98).abs() < 1e-15);
        assert!(!out.terminal);

        let out = step_env(&env, &[2.0, 1.0], &[1.0]).unwrap();
        assert_eq!(out.next_state, vec![2.0, 1.0]);
        assert_eq!(out.reward, -1.0);
    }

    #[test]
    fn sparse_reach_goal_band() {
        let env = EnvSpec::sparse_reach();
        let out = step_env(&env, &[0.93, 0.0], &[0.0]).unwrap();
        assert_eq!(out.next_state[0], 0.93);
        assert_eq!(out.reward, 1.0);
        let out = step_env(&env, &[0.5, 0.0], &[0.0]).unwrap();
        assert_eq!(out.reward, 0.0);
    }

    #[test]
    fn actions_are_clamped_before_use() {
        let env = EnvSpec::line_reach();
        let a = step_env(&env, &[0.0, 0.0], &[5.0]).unwrap();
        let b = step_env(&env, &[0.0, 0.0], &[1.0]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let env = EnvSpec::line_reach();
        let err = step_env(&env, &[0.0], &[1.0]).unwrap_err();
        assert_eq!(err.code(), "E_DIM");
        let err = step_env(&env, &[0.0, 0.0], &[1.0, 0.0]).unwrap_err();
        assert_eq!(err.code(), "E_DIM");
    }

    #[test]
    fn unknown_env_id() {
        assert_eq!(EnvSpec::from_id("HalfCheetah").unwrap_err().code(), "E_ENV");
    }
}
