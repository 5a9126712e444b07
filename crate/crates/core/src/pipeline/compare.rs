use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Mode};
use super::run::{run_experiment_cached, ArtifactCache, ExperimentReport};
use super::{stage, PipelineError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub mode: Mode,
    pub mean_score: f64,
    pub std_score: f64,
    /// `mean_score - original mean_score`, when `original` was run.
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub reports: Vec<ExperimentReport>,
}

impl Comparison {
    pub fn row(&self, mode: Mode) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.mode == mode)
    }
}

/// Runs each config and tabulates the modes in the fixed order
/// original, single, no_correct, otto. Configs must share env and dataset.
pub fn compare_modes(cfgs: &[ExperimentConfig], out_dir: &Path) -> Result<Comparison> {
    let Some(first) = cfgs.first() else {
        return Err(PipelineError::Config("no configs to compare".into()));
    };
    let mut modes: Vec<Mode> = cfgs.iter().map(|c| c.mode).collect();
    modes.sort();
    modes.dedup();
    if modes.len() != cfgs.len() || cfgs.len() < 2 {
        return Err(PipelineError::Config("need at least two distinct modes".into()));
    }
    if cfgs.iter().any(|c| c.env_id != first.env_id || c.dataset != first.dataset) {
        return Err(PipelineError::Config("configs disagree on environment or dataset".into()));
    }
    for c in cfgs {
        c.validate()?;
    }
    let mut ordered: Vec<&ExperimentConfig> = cfgs.iter().collect();
    ordered.sort_by_key(|c| c.mode);

    let mut cache = ArtifactCache::default();
    let reports = ordered
        .iter()
        .map(|c| run_experiment_cached(c, out_dir, &mut cache))
        .collect::<Result<Vec<_>>>()?;
    let baseline = reports.iter().find(|r| r.mode == Mode::Original).map(|r| r.mean_score);
    let rows: Vec<ComparisonRow> = reports
        .iter()
        .map(|r| ComparisonRow {
            mode: r.mode,
            mean_score: r.mean_score,
            std_score: r.std_score,
            delta: baseline.map(|b| r.mean_score - b),
        })
        .collect();

    fs::create_dir_all(out_dir)
        .map_err(|source| PipelineError::Io { path: out_dir.display().to_string(), source })?;
    let mut w = csv::Writer::from_path(out_dir.join("comparison.csv")).map_err(stage("report"))?;
    w.write_record(["mode", "mean_score", "std_score", "delta"]).map_err(stage("report"))?;
    for r in &rows {
        w.write_record([
            r.mode.to_string(),
            r.mean_score.to_string(),
            r.std_score.to_string(),
            r.delta.map(|d| d.to_string()).unwrap_or_default(),
        ])
        .map_err(stage("report"))?;
    }
    w.flush().map_err(|source| PipelineError::Io { path: out_dir.display().to_string(), source })?;
    Ok(Comparison { rows, reports })
}
