use super::select::{num_segments, select_segments, Segment};
use super::{GenerateError, GenerationConfig, Result};
use crate::data::{EnvSpec, OfflineDataset, Source, Step, Trajectory};
use crate::rng::SplitMix64;
use crate::worldtrain::EnsembleBundle;

/// One simulated transition with its ensemble disagreement.
#[derive(Debug, Clone, PartialEq)]
pub struct StepPrediction {
    pub next_state: Vec<f64>,
    /// Per-dimension std of the next state, in dataset-normalized units.
    pub state_std: Vec<f64>,
    pub reward: f64,
    pub reward_std: f64,
}

/// Anything that can extend a `(state, action, step)` history by one step.
pub trait WorldSimulator {
    fn context_len(&self) -> usize;

    fn predict(&self, states: &[&[f64]], actions: &[&[f64]], steps: &[usize]) -> Result<StepPrediction>;
}

impl WorldSimulator for EnsembleBundle {
    fn context_len(&self) -> usize {
        EnsembleBundle::context_len(self)
    }

    fn predict(&self, states: &[&[f64]], actions: &[&[f64]], steps: &[usize]) -> Result<StepPrediction> {
        let window = self.norm.encode(states, actions, steps, self.context_len())?;
        let (next_state, raw_std) = self.predict_state(&window)?;
        let (reward, reward_std) = self.predict_reward(&window)?;
        let state_std = raw_std.iter().zip(&self.norm.state_std).map(|(s, n)| s / n).collect();
        Ok(StepPrediction { next_state, state_std, reward, reward_std })
    }
}

/// A rollout of `h` steps branching from a logged segment.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedTrajectory {
    pub source_traj: usize,
    pub t_s: usize,
    /// The real state the rollout starts from.
    pub start_state: Vec<f64>,
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub next_states: Vec<Vec<f64>>,
    pub state_std: Vec<Vec<f64>>,
    pub reward_std: Vec<f64>,
}

impl GeneratedTrajectory {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Converts to a generated-source trajectory carrying `rewards`.
    /// Every step is non-terminal.
    pub fn to_trajectory(&self, rewards: &[f64]) -> Trajectory {
        let steps = (0..self.len())
            .map(|i| Step {
                state: if i == 0 { self.start_state.clone() } else { self.next_states[i - 1].clone() },
                action: self.actions[i].clone(),
                reward: rewards[i],
                terminal: false,
                t: self.t_s + i,
            })
            .collect();
        Trajectory { steps, source: Source::Generated }
    }
}

/// Adds uniform `(-epsilon, epsilon)` noise per dimension, then clamps.
pub fn perturb_action(
    action: &[f64],
    epsilon: f64,
    low: &[f64],
    high: &[f64],
    rng: &mut SplitMix64,
) -> Result<Vec<f64>> {
    if !(epsilon >= 0.0) {
        return Err(GenerateError::Config(format!("epsilon must be non-negative, got {epsilon}")));
    }
    if low.len() != action.len() || high.len() != action.len() {
        return Err(GenerateError::Config("action bounds do not match the action dimension".into()));
    }
    Ok(action
        .iter()
        .zip(low.iter().zip(high))
        .map(|(&a, (&lo, &hi))| {
            let noisy = if epsilon == 0.0 { a } else { a + rng.uniform(-epsilon, epsilon) };
            noisy.clamp(lo, hi)
        })
        .collect())
}

pub fn rollout_segment(
    d: &OfflineDataset,
    seg: &Segment,
    sim: &dyn WorldSimulator,
    epsilon: f64,
    env: &EnvSpec,
    rng: &mut SplitMix64,
) -> Result<GeneratedTrajectory> {
    let traj = d
        .trajectories
        .get(seg.traj)
        .ok_or_else(|| GenerateError::InvalidSegment(format!("trajectory {} does not exist", seg.traj)))?;
    if seg.len < 2 || seg.start + seg.len > traj.len() {
        return Err(GenerateError::InvalidSegment(format!(
            "window [{}, {}) does not fit a trajectory of {} steps",
            seg.start,
            seg.start + seg.len,
            traj.len()
        )));
    }
    let source = &traj.steps[seg.start..seg.start + seg.len];
    if source[..seg.len - 1].iter().any(|s| s.terminal) {
        return Err(GenerateError::InvalidSegment("window crosses a terminal step".into()));
    }
    let ctx = sim.context_len().max(1);
    let prefix = &traj.steps[seg.start.saturating_sub(ctx - 1)..seg.start];
    let mut states: Vec<Vec<f64>> = prefix.iter().map(|s| s.state.clone()).collect();
    let mut actions: Vec<Vec<f64>> = prefix.iter().map(|s| s.action.clone()).collect();
    let mut steps: Vec<usize> = prefix.iter().map(|s| s.t).collect();

    let mut out = GeneratedTrajectory {
        source_traj: seg.traj,
        t_s: source[0].t,
        start_state: source[0].state.clone(),
        actions: Vec::with_capacity(seg.len),
        rewards: Vec::with_capacity(seg.len),
        next_states: Vec::with_capacity(seg.len),
        state_std: Vec::with_capacity(seg.len),
        reward_std: Vec::with_capacity(seg.len),
    };
    let mut current = source[0].state.clone();
    for step in source {
        let a = perturb_action(&step.action, epsilon, &env.action_low, &env.action_high, rng)?;
        states.push(current);
        actions.push(a.clone());
        steps.push(step.t);
        if states.len() > ctx {
            states.remove(0);
            actions.remove(0);
            steps.remove(0);
        }
        let s_refs: Vec<&[f64]> = states.iter().map(Vec::as_slice).collect();
        let a_refs: Vec<&[f64]> = actions.iter().map(Vec::as_slice).collect();
        let p = sim.predict(&s_refs, &a_refs, &steps)?;
        current = p.next_state.clone();
        out.actions.push(a);
        out.rewards.push(p.reward);
        out.next_states.push(p.next_state);
        out.state_std.push(p.state_std);
        out.reward_std.push(p.reward_std);
    }
    Ok(out)
}

/// Selects `N = floor(ratio * |D| / h)` segments and rolls each out with
/// its own stream `(seed, ordinal)`.
pub fn generate(
    d: &OfflineDataset,
    sim: &dyn WorldSimulator,
    cfg: &GenerationConfig,
    env: &EnvSpec,
) -> Result<(Vec<Segment>, Vec<GeneratedTrajectory>)> {
    cfg.validate()?;
    let n = num_segments(d, cfg);
    let mut rng = SplitMix64::stream(cfg.seed, u64::MAX);
    let segments = select_segments(d, cfg, n, &mut rng)?;
    let rollouts = segments
        .iter()
        .enumerate()
        .map(|(i, seg)| {
            let mut rng = SplitMix64::stream(cfg.seed, i as u64);
            rollout_segment(d, seg, sim, cfg.epsilon, env, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((segments, rollouts))
}
