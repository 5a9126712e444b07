use serde::{Deserialize, Serialize};

use super::bundle::{EnsembleBundle, WorldNorm};
use super::schedule::{lr_at, LRSchedule};
use super::{Result, WorldError};
use crate::data::{OfflineDataset, Source};
use crate::rng::SplitMix64;
use crate::seqcore::{optimizer_step, HeadKind, ModelConfig, OptimizerState, Sample, SequenceModel, TokenWindow};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldTrainConfig {
    /// Shared architecture; the head kind is set per run.
    pub arch: ModelConfig,
    /// `n_cycles` here is `K`, the number of state snapshots.
    pub state_schedule: LRSchedule,
    /// `n_cycles` here is `Q`, the number of reward snapshots.
    pub reward_schedule: LRSchedule,
    pub batch_size: usize,
    pub seed: u64,
}

impl WorldTrainConfig {
    pub fn desk(d_s: usize, d_a: usize, max_step: usize, seed: u64) -> Self {
        Self {
            arch: ModelConfig::desk_scale(d_s, d_a, max_step, HeadKind::State),
            state_schedule: LRSchedule::desk_scale(),
            reward_schedule: LRSchedule::desk_scale(),
            batch_size: 32,
            seed,
        }
    }

    /// The desk architecture on the short schedule.
    pub fn quick(d_s: usize, d_a: usize, max_step: usize, seed: u64) -> Self {
        Self {
            state_schedule: LRSchedule::quick(),
            reward_schedule: LRSchedule::quick(),
            ..Self::desk(d_s, d_a, max_step, seed)
        }
    }

    pub fn with_ensemble_sizes(mut self, k: usize, q: usize) -> Self {
        self.state_schedule.n_cycles = k;
        self.reward_schedule.n_cycles = q;
        self
    }
}

/// Normalized per-trajectory arrays ready for window sampling.
#[derive(Debug, Clone)]
pub struct TrainingData {
    pub norm: WorldNorm,
    d_s: usize,
    d_a: usize,
    trajs: Vec<TrajArrays>,
}

#[derive(Debug, Clone)]
struct TrajArrays {
    states: Vec<f64>,
    actions: Vec<f64>,
    steps: Vec<usize>,
    deltas: Vec<f64>,
    rewards: Vec<f64>,
}

impl TrainingData {
    /// Uses only collected trajectories.
    pub fn new(d: &OfflineDataset) -> Self {
        Self::with_norm(d, WorldNorm::from_dataset(d))
    }

    pub fn with_norm(d: &OfflineDataset, norm: WorldNorm) -> Self {
        let trajs = d
            .trajectories
            .iter()
            .filter(|t| t.source == Source::Collected)
            .map(|t| {
                let mut states = Vec::new();
                let mut actions = Vec::new();
                for s in &t.steps {
                    norm.normalize_state(&s.state, &mut states);
                    norm.normalize_action(&s.action, &mut actions);
                }
                let deltas = t
                    .steps
                    .windows(2)
                    .flat_map(|w| {
                        (0..d.d_s)
                            .map(|c| (w[1].state[c] - w[0].state[c] - norm.delta_mean[c]) / norm.delta_std[c])
                            .collect::<Vec<_>>()
                    })
                    .collect();
                let rewards = t.steps.iter().map(|s| (s.reward - norm.reward_mean) / norm.reward_std).collect();
                TrajArrays { states, actions, steps: t.steps.iter().map(|s| s.t).collect(), deltas, rewards }
            })
            .collect();
        Self { norm, d_s: d.d_s, d_a: d.d_a, trajs }
    }

    /// All `(trajectory, end step)` pairs whose final slot has a target.
    pub fn window_ends(&self, head: HeadKind) -> Vec<(usize, usize)> {
        self.trajs
            .iter()
            .enumerate()
            .flat_map(|(i, t)| {
                let last = match head {
                    HeadKind::State => t.steps.len().saturating_sub(1),
                    HeadKind::Reward => t.steps.len(),
                };
                (0..last).map(move |e| (i, e))
            })
            .collect()
    }

    /// The window of up to `context_len` steps ending at step `end` of
    /// trajectory `traj`, with per-slot targets for `head`.
    pub fn sample(&self, traj: usize, end: usize, context_len: usize, head: HeadKind) -> Result<Sample> {
        let t = &self.trajs[traj];
        let start = (end + 1).saturating_sub(context_len);
        let window = TokenWindow::new(
            self.d_s,
            self.d_a,
            t.states[start * self.d_s..(end + 1) * self.d_s].to_vec(),
            t.actions[start * self.d_a..(end + 1) * self.d_a].to_vec(),
            t.steps[start..=end].to_vec(),
        )?
        .left_padded(context_len)?;
        let pad = context_len - (end + 1 - start);
        let (dim, source) = match head {
            HeadKind::State => (self.d_s, &t.deltas),
            HeadKind::Reward => (1, &t.rewards),
        };
        let mut target = vec![0.0; pad * dim];
        target.extend_from_slice(&source[start * dim..(end + 1) * dim]);
        let mask = window.valid.clone();
        Ok(Sample { window, target, mask })
    }
}

/// Loss diagnostics for one head's run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    /// Mean training loss over the final 5% of each cycle.
    pub cycle_end_loss: Vec<f64>,
    pub steps: usize,
}

/// One training run for `head`, returning a snapshot per cycle.
pub fn train_snapshots(
    data: &TrainingData,
    arch: &ModelConfig,
    head: HeadKind,
    sched: &LRSchedule,
    batch_size: usize,
    seed: u64,
) -> Result<(Vec<SequenceModel>, TrainingReport)> {
    sched.validate().map_err(WorldError::Config)?;
    if batch_size == 0 {
        return Err(WorldError::Config("batch_size must be positive".into()));
    }
    let cfg = arch.with_head(head);
    let ends = data.window_ends(head);
    if ends.is_empty() {
        return Err(WorldError::DatasetTooSmall(format!(
            "no trajectory provides a {head:?} target"
        )));
    }
    let mut model = SequenceModel::new(cfg.clone(), SplitMix64::stream(seed, 0).next())?;
    let mut opt = OptimizerState::new(model.num_params());
    let mut batch_rng = SplitMix64::stream(seed, 1);
    let mut dropout_rng = SplitMix64::stream(seed, 2);

    let tail = (sched.cycle_steps / 20).max(1);
    let mut snapshots = Vec::with_capacity(sched.n_cycles);
    let mut report = TrainingReport::default();
    let mut tail_loss = 0.0;
    for t in 0..sched.total_steps() {
        let batch = (0..batch_size)
            .map(|_| {
                let (traj, end) = ends[batch_rng.below(ends.len())];
                data.sample(traj, end, cfg.context_len, head)
            })
            .collect::<Result<Vec<_>>>()?;
        let lr = lr_at(t, sched);
        let (loss, grads) = model.loss_and_gradient(&batch, Some(&mut dropout_rng))?;
        if !loss.is_finite() {
            return Err(WorldError::NonFiniteLoss { head: format!("{head:?}"), step: t, lr });
        }
        optimizer_step(&mut model.params, &grads, &mut opt, lr)?;
        if t >= sched.warmup_steps && (t - sched.warmup_steps) % sched.cycle_steps >= sched.cycle_steps - tail {
            tail_loss += loss;
        }
        if sched.is_snapshot_step(t) {
            snapshots.push(model.clone());
            report.cycle_end_loss.push(tail_loss / tail as f64);
            tail_loss = 0.0;
        }
    }
    report.steps = sched.total_steps();
    Ok((snapshots, report))
}

/// Trains the state and reward ensembles on the collected part of `dataset`.
pub fn train_world_ensemble(
    dataset: &OfflineDataset,
    cfg: &WorldTrainConfig,
) -> Result<(EnsembleBundle, [TrainingReport; 2])> {
    if dataset.num_transitions() == 0 {
        return Err(WorldError::DatasetTooSmall("dataset is empty".into()));
    }
    if cfg.arch.d_s != dataset.d_s || cfg.arch.d_a != dataset.d_a {
        return Err(WorldError::Config("model dims differ from dataset dims".into()));
    }
    let data = TrainingData::new(dataset);
    let (state_models, state_report) = train_snapshots(
        &data,
        &cfg.arch,
        HeadKind::State,
        &cfg.state_schedule,
        cfg.batch_size,
        SplitMix64::stream(cfg.seed, 10).next(),
    )?;
    let (reward_models, reward_report) = train_snapshots(
        &data,
        &cfg.arch,
        HeadKind::Reward,
        &cfg.reward_schedule,
        cfg.batch_size,
        SplitMix64::stream(cfg.seed, 20).next(),
    )?;
    Ok((EnsembleBundle { state_models, reward_models, norm: data.norm }, [state_report, reward_report]))
}
