//! Directory format: `meta.json` plus `data.bin`, a flat little-endian f64
//! payload with each step laid out as `[state | action | reward | terminal]`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dataset::{OfflineDataset, Source, Statistics, Step, Trajectory};
use super::{DataError, Result};

pub const FORMAT_VERSION: u32 = 1;
const META_FILE: &str = "meta.json";
const DATA_FILE: &str = "data.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub format_version: u32,
    pub env_id: String,
    pub d_s: usize,
    pub d_a: usize,
    pub n_traj: usize,
    pub horizon: usize,
    pub seed: u64,
    /// `collected`, `generated` or `mixed`.
    pub source: String,
    pub statistics: Statistics,
    pub lengths: Vec<usize>,
    pub start_steps: Vec<usize>,
    pub sources: Vec<Source>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io { path: path.display().to_string(), source }
}

pub fn write_dataset(d: &OfflineDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let meta = DatasetMeta {
        format_version: FORMAT_VERSION,
        env_id: d.env_id.clone(),
        d_s: d.d_s,
        d_a: d.d_a,
        n_traj: d.trajectories.len(),
        horizon: d.horizon,
        seed: d.seed,
        source: d.source_label().to_string(),
        statistics: d.stats.clone(),
        lengths: d.trajectories.iter().map(Trajectory::len).collect(),
        start_steps: d.trajectories.iter().map(Trajectory::start_step).collect(),
        sources: d.trajectories.iter().map(|t| t.source).collect(),
    };
    let json = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    let meta_path = dir.join(META_FILE);
    fs::write(&meta_path, json).map_err(io_err(&meta_path))?;

    let row = d.d_s + d.d_a + 2;
    let mut bytes = Vec::with_capacity(d.num_transitions() * row * 8);
    for step in d.trajectories.iter().flat_map(|t| &t.steps) {
        for &x in step.state.iter().chain(&step.action) {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
        bytes.extend_from_slice(&step.reward.to_le_bytes());
        let term = if step.terminal { 1.0f64 } else { 0.0 };
        bytes.extend_from_slice(&term.to_le_bytes());
    }
    let data_path = dir.join(DATA_FILE);
    fs::write(&data_path, bytes).map_err(io_err(&data_path))
}

fn check_meta(meta: &DatasetMeta) -> Result<()> {
    if meta.format_version != FORMAT_VERSION {
        return Err(DataError::CorruptHeader(format!(
            "unsupported format_version {}",
            meta.format_version
        )));
    }
    if meta.d_s == 0 || meta.d_a == 0 {
        return Err(DataError::CorruptHeader("zero state or action dimension".into()));
    }
    let s = &meta.statistics;
    if s.state_mean.len() != meta.d_s
        || s.state_std.len() != meta.d_s
        || s.action_mean.len() != meta.d_a
        || s.action_std.len() != meta.d_a
    {
        return Err(DataError::DimensionMismatch(
            "statistics length disagrees with declared dims".into(),
        ));
    }
    if meta.lengths.len() != meta.n_traj
        || meta.start_steps.len() != meta.n_traj
        || meta.sources.len() != meta.n_traj
    {
        return Err(DataError::CorruptHeader(
            "per-trajectory arrays disagree with n_traj".into(),
        ));
    }
    if meta.n_traj == 0 {
        return Err(DataError::EmptyDataset);
    }
    if let Some(i) = meta.lengths.iter().position(|&l| l == 0) {
        return Err(DataError::InvalidTrajectory(format!("trajectory {i} is empty")));
    }
    Ok(())
}

pub fn read_dataset(dir: &Path) -> Result<OfflineDataset> {
    let meta_path = dir.join(META_FILE);
    let text = fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?;
    let meta: DatasetMeta =
        serde_json::from_str(&text).map_err(|e| DataError::CorruptHeader(e.to_string()))?;
    check_meta(&meta)?;

    let data_path = dir.join(DATA_FILE);
    let bytes = fs::read(&data_path).map_err(io_err(&data_path))?;
    let row = meta.d_s + meta.d_a + 2;
    let total_steps: usize = meta.lengths.iter().sum();
    let expected = total_steps * row * 8;
    if bytes.len() < expected {
        return Err(DataError::TruncatedPayload { expected, found: bytes.len() });
    }
    if bytes.len() > expected {
        return Err(DataError::PayloadShape { expected, found: bytes.len() });
    }

    let mut values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    let mut trajectories = Vec::with_capacity(meta.n_traj);
    for ((&len, &start), &source) in meta.lengths.iter().zip(&meta.start_steps).zip(&meta.sources) {
        let mut steps = Vec::with_capacity(len);
        for i in 0..len {
            let state: Vec<f64> = values.by_ref().take(meta.d_s).collect();
            let action: Vec<f64> = values.by_ref().take(meta.d_a).collect();
            let reward = values.next().expect("length checked");
            let terminal = match values.next().expect("length checked") {
                x if x == 0.0 => false,
                x if x == 1.0 => true,
                x => {
                    return Err(DataError::InvalidTrajectory(format!(
                        "terminal flag {x} is neither 0.0 nor 1.0"
                    )))
                }
            };
            steps.push(Step { state, action, reward, terminal, t: start + i });
        }
        let traj = Trajectory { steps, source };
        traj.validate(meta.d_s, meta.d_a)?;
        trajectories.push(traj);
    }
    Ok(OfflineDataset {
        env_id: meta.env_id,
        d_s: meta.d_s,
        d_a: meta.d_a,
        horizon: meta.horizon,
        seed: meta.seed,
        trajectories,
        stats: meta.statistics,
    })
}
