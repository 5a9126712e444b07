use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Result, WorldError};
use crate::data::{dataset_moments, OfflineDataset, Source};
use crate::seqcore::{read_weights, write_weights, ModelConfig, SequenceModel, TokenWindow};

/// Normalization used for model inputs and targets. State targets are
/// standardized one-step deltas `s' - s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldNorm {
    pub state_mean: Vec<f64>,
    pub state_std: Vec<f64>,
    pub action_mean: Vec<f64>,
    pub action_std: Vec<f64>,
    pub delta_mean: Vec<f64>,
    pub delta_std: Vec<f64>,
    pub reward_mean: f64,
    pub reward_std: f64,
}

impl WorldNorm {
    pub fn from_dataset(d: &OfflineDataset) -> Self {
        let deltas: Vec<Vec<f64>> = d
            .trajectories
            .iter()
            .filter(|t| t.source == Source::Collected)
            .flat_map(|t| {
                t.steps.windows(2).map(|w| {
                    w[1].state.iter().zip(&w[0].state).map(|(b, a)| b - a).collect::<Vec<f64>>()
                })
            })
            .collect();
        let (delta_mean, delta_std) = dataset_moments(deltas.iter().map(Vec::as_slice), d.d_s);
        Self {
            state_mean: d.stats.state_mean.clone(),
            state_std: d.stats.state_std.clone(),
            action_mean: d.stats.action_mean.clone(),
            action_std: d.stats.action_std.clone(),
            delta_mean,
            delta_std,
            reward_mean: d.stats.reward_mean,
            reward_std: d.stats.reward_std,
        }
    }

    /// Identity normalization, useful for hand-built bundles.
    pub fn identity(d_s: usize, d_a: usize) -> Self {
        Self {
            state_mean: vec![0.0; d_s],
            state_std: vec![1.0; d_s],
            action_mean: vec![0.0; d_a],
            action_std: vec![1.0; d_a],
            delta_mean: vec![0.0; d_s],
            delta_std: vec![1.0; d_s],
            reward_mean: 0.0,
            reward_std: 1.0,
        }
    }

    pub fn normalize_state(&self, s: &[f64], out: &mut Vec<f64>) {
        out.extend(s.iter().zip(self.state_mean.iter().zip(&self.state_std)).map(|(x, (m, sd))| (x - m) / sd));
    }

    pub fn normalize_action(&self, a: &[f64], out: &mut Vec<f64>) {
        out.extend(a.iter().zip(self.action_mean.iter().zip(&self.action_std)).map(|(x, (m, sd))| (x - m) / sd));
    }

    pub fn denormalize_state(&self, s: &[f64]) -> Vec<f64> {
        s.iter().zip(self.state_mean.iter().zip(&self.state_std)).map(|(x, (m, sd))| x * sd + m).collect()
    }

    /// Builds a left-padded window from raw steps.
    pub fn encode(
        &self,
        states: &[&[f64]],
        actions: &[&[f64]],
        steps: &[usize],
        context_len: usize,
    ) -> Result<TokenWindow> {
        let mut s = Vec::with_capacity(states.len() * self.state_mean.len());
        let mut a = Vec::with_capacity(actions.len() * self.action_mean.len());
        for st in states {
            self.normalize_state(st, &mut s);
        }
        for ac in actions {
            self.normalize_action(ac, &mut a);
        }
        let w = TokenWindow::new(self.state_mean.len(), self.action_mean.len(), s, a, steps.to_vec())?;
        Ok(w.left_padded(context_len)?)
    }
}

/// Mean and population (divide-by-n) standard deviation.
pub fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// `K` state-model and `Q` reward-model snapshots sharing one normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleBundle {
    pub state_models: Vec<SequenceModel>,
    pub reward_models: Vec<SequenceModel>,
    pub norm: WorldNorm,
}

impl EnsembleBundle {
    pub fn k(&self) -> usize {
        self.state_models.len()
    }

    pub fn q(&self) -> usize {
        self.reward_models.len()
    }

    pub fn context_len(&self) -> usize {
        self.state_models
            .iter()
            .chain(&self.reward_models)
            .map(|m| m.config.context_len)
            .min()
            .unwrap_or(0)
    }

    /// A bundle holding only the final snapshot of each ensemble.
    pub fn last_snapshot(&self) -> Result<Self> {
        let (Some(s), Some(r)) = (self.state_models.last(), self.reward_models.last()) else {
            return Err(WorldError::EmptyEnsemble);
        };
        Ok(Self { state_models: vec![s.clone()], reward_models: vec![r.clone()], norm: self.norm.clone() })
    }

    /// Each state snapshot's absolute next-state prediction at the window's
    /// final step.
    pub fn state_members(&self, window: &TokenWindow) -> Result<Vec<Vec<f64>>> {
        if self.state_models.is_empty() {
            return Err(WorldError::EmptyEnsemble);
        }
        let current = self.norm.denormalize_state(window.state(window.len() - 1));
        self.state_models
            .iter()
            .map(|m| {
                let pred = m.forward(window)?;
                Ok(pred
                    .last()
                    .iter()
                    .zip(&current)
                    .zip(self.norm.delta_mean.iter().zip(&self.norm.delta_std))
                    .map(|((d, s), (dm, ds))| s + d * ds + dm)
                    .collect())
            })
            .collect()
    }

    /// Ensemble mean next state and per-dimension population std.
    pub fn predict_state(&self, window: &TokenWindow) -> Result<(Vec<f64>, Vec<f64>)> {
        let members = self.state_members(window)?;
        let d_s = members[0].len();
        let mut mean = Vec::with_capacity(d_s);
        let mut std = Vec::with_capacity(d_s);
        for c in 0..d_s {
            let column: Vec<f64> = members.iter().map(|m| m[c]).collect();
            let (m, s) = mean_and_std(&column);
            mean.push(m);
            std.push(s);
        }
        Ok((mean, std))
    }

    pub fn reward_members(&self, window: &TokenWindow) -> Result<Vec<f64>> {
        if self.reward_models.is_empty() {
            return Err(WorldError::EmptyEnsemble);
        }
        self.reward_models
            .iter()
            .map(|m| Ok(m.forward(window)?.last()[0] * self.norm.reward_std + self.norm.reward_mean))
            .collect()
    }

    /// Ensemble mean reward (environment units) and population std.
    pub fn predict_reward(&self, window: &TokenWindow) -> Result<(f64, f64)> {
        Ok(mean_and_std(&self.reward_members(window)?))
    }
}

const BUNDLE_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct BundleManifest {
    format_version: u32,
    k: usize,
    q: usize,
    state_config: ModelConfig,
    reward_config: ModelConfig,
    num_state_params: usize,
    num_reward_params: usize,
    norm: WorldNorm,
    state_files: Vec<String>,
    reward_files: Vec<String>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> WorldError + '_ {
    move |source| WorldError::Io { path: path.display().to_string(), source }
}

/// Writes `bundle.json` plus `state_k.bin` / `reward_q.bin` weight files.
pub fn save_bundle(bundle: &EnsembleBundle, dir: &Path) -> Result<()> {
    let (Some(s0), Some(r0)) = (bundle.state_models.first(), bundle.reward_models.first()) else {
        return Err(WorldError::EmptyEnsemble);
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let state_files: Vec<String> = (0..bundle.k()).map(|k| format!("state_{k}.bin")).collect();
    let reward_files: Vec<String> = (0..bundle.q()).map(|q| format!("reward_{q}.bin")).collect();
    for (m, f) in bundle.state_models.iter().zip(&state_files) {
        write_weights(&m.params, &dir.join(f))?;
    }
    for (m, f) in bundle.reward_models.iter().zip(&reward_files) {
        write_weights(&m.params, &dir.join(f))?;
    }
    let manifest = BundleManifest {
        format_version: BUNDLE_VERSION,
        k: bundle.k(),
        q: bundle.q(),
        state_config: s0.config.clone(),
        reward_config: r0.config.clone(),
        num_state_params: s0.num_params(),
        num_reward_params: r0.num_params(),
        norm: bundle.norm.clone(),
        state_files,
        reward_files,
    };
    let path = dir.join("bundle.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest).expect("manifest serializes"))
        .map_err(io_err(&path))
}

pub fn load_bundle(dir: &Path) -> Result<EnsembleBundle> {
    let path = dir.join("bundle.json");
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let m: BundleManifest = serde_json::from_str(&text).map_err(|e| WorldError::Corrupt(e.to_string()))?;
    if m.format_version != BUNDLE_VERSION || m.state_files.len() != m.k || m.reward_files.len() != m.q {
        return Err(WorldError::Corrupt("manifest fields are inconsistent".into()));
    }
    let load = |cfg: &ModelConfig, n: usize, files: &[String]| -> Result<Vec<SequenceModel>> {
        files
            .iter()
            .map(|f| Ok(SequenceModel::from_params(cfg.clone(), read_weights(&dir.join(f), n)?)?))
            .collect()
    };
    Ok(EnsembleBundle {
        state_models: load(&m.state_config, m.num_state_params, &m.state_files)?,
        reward_models: load(&m.reward_config, m.num_reward_params, &m.reward_files)?,
        norm: m.norm,
    })
}
