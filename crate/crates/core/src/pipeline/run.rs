use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Mode};
use super::{stage, PipelineError, Result};
use crate::agent::{evaluate_policy, normalized_score, save_policy, train_policy, AgentConfig, Policy};
use crate::data::{collect_dataset, write_dataset, EnvSpec, OfflineDataset};
use crate::evaluator::{evaluate_trajectory, EvaluatorConfig};
use crate::generate::{generate, GenerationConfig};
use crate::rng::SplitMix64;
use crate::worldtrain::{save_bundle, train_world_ensemble, EnsembleBundle, WorldTrainConfig};

pub const METRICS_HEADER: [&str; 13] = [
    "run_id",
    "mode",
    "strategy",
    "seed",
    "delta",
    "epsilon",
    "h",
    "omega",
    "K",
    "Q",
    "mean_return",
    "normalized_score",
    "wall_seconds",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub k: usize,
    pub q: usize,
    pub original_transitions: usize,
    pub generated_transitions: usize,
    pub mean_return: f64,
    pub normalized_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub run_id: String,
    pub env_id: String,
    pub mode: Mode,
    pub seeds: Vec<SeedResult>,
    pub mean_score: f64,
    /// Population std over seeds.
    pub std_score: f64,
}

impl ExperimentReport {
    pub fn generated_transitions(&self) -> usize {
        self.seeds.iter().map(|s| s.generated_transitions).sum()
    }
}

/// Reuses datasets, ensembles and rollouts across runs that share them.
#[derive(Debug, Default)]
pub struct ArtifactCache {
    datasets: HashMap<String, OfflineDataset>,
    bundles: HashMap<String, EnsembleBundle>,
    rollouts: HashMap<String, OfflineDataset>,
}

fn derived_seed(base: u64, run_seed: u64) -> u64 {
    SplitMix64::stream(base, run_seed).next()
}

fn key<T: Serialize>(parts: &T) -> String {
    serde_json::to_string(parts).expect("cache key serializes")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.display().to_string(), source }
}

pub fn stage_collect(cfg: &ExperimentConfig) -> Result<OfflineDataset> {
    let env = cfg.env()?;
    collect_dataset(&env, cfg.dataset.policy, cfg.dataset.n_traj, cfg.dataset.seed).map_err(stage("collect"))
}

/// Trains the ensembles for run seed `seed`.
pub fn stage_train_world(cfg: &ExperimentConfig, data: &OfflineDataset, seed: u64) -> Result<EnsembleBundle> {
    let world = WorldTrainConfig { seed: derived_seed(cfg.world.seed, seed), ..cfg.world.clone() };
    Ok(train_world_ensemble(data, &world).map_err(stage("train-world"))?.0)
}

/// Generated (and, for `otto`, corrected) trajectories for run seed `seed`.
/// `single` keeps only the final snapshot of each ensemble.
pub fn stage_generate(
    cfg: &ExperimentConfig,
    mode: Mode,
    data: &OfflineDataset,
    bundle: &EnsembleBundle,
    seed: u64,
) -> Result<OfflineDataset> {
    let env = cfg.env()?;
    let gen_cfg = GenerationConfig { seed: derived_seed(cfg.generation.seed, seed), ..cfg.generation.clone() };
    let single;
    let sim = if mode == Mode::Single {
        single = bundle.last_snapshot().map_err(stage("generate"))?;
        &single
    } else {
        bundle
    };
    let (_, rollouts) = generate(data, sim, &gen_cfg, &env).map_err(stage("generate"))?;
    let eval_cfg = if mode.corrects() { cfg.evaluator.clone() } else { EvaluatorConfig::pass_through() };
    let trajectories = rollouts
        .iter()
        .map(|g| Ok(g.to_trajectory(&evaluate_trajectory(g, &eval_cfg)?)))
        .collect::<std::result::Result<Vec<_>, crate::evaluator::EvaluatorError>>()
        .map_err(stage("correct"))?;
    OfflineDataset::generated_from(data, gen_cfg.seed, trajectories).map_err(stage("generate"))
}

pub fn stage_train_policy(cfg: &ExperimentConfig, mixed: &OfflineDataset, seed: u64) -> Result<Policy> {
    let env = cfg.env()?;
    let agent = AgentConfig { seed: derived_seed(cfg.agent.seed, seed), ..cfg.agent.clone() };
    train_policy(mixed, &agent, &env.action_low, &env.action_high).map_err(stage("train-policy"))
}

/// Mean return and normalized score; the episode stream depends only on
/// the run seed, so every mode is evaluated on the same start states.
pub fn stage_evaluate(cfg: &ExperimentConfig, env: &EnvSpec, policy: &Policy, seed: u64) -> Result<(f64, f64)> {
    let j = evaluate_policy(env, policy, cfg.eval_episodes, derived_seed(0xE7A1, seed)).map_err(stage("evaluate"))?;
    let score = normalized_score(j, env).map_err(stage("evaluate"))?;
    Ok((j, score))
}

pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentReport> {
    run_experiment_cached(cfg, out_dir, &mut ArtifactCache::default())
}

fn fmt_opt<T: ToString>(on: bool, v: T) -> String {
    if on {
        v.to_string()
    } else {
        String::new()
    }
}

/// One metrics row; parameters that are not in effect for the mode are left
/// empty, as is `wall_seconds` unless `record_wall_time` is set.
pub fn metrics_record(
    cfg: &ExperimentConfig,
    seed: u64,
    k: usize,
    q: usize,
    mean_return: f64,
    score: f64,
    wall_seconds: f64,
) -> [String; 13] {
    let g = cfg.mode.generates();
    [
        cfg.run_id(),
        cfg.mode.to_string(),
        fmt_opt(g, cfg.generation.strategy),
        seed.to_string(),
        fmt_opt(g, cfg.generation.ratio),
        fmt_opt(g, cfg.generation.epsilon),
        fmt_opt(g, cfg.generation.horizon),
        fmt_opt(cfg.mode.corrects(), cfg.evaluator.omega),
        fmt_opt(g, k),
        fmt_opt(g, q),
        mean_return.to_string(),
        score.to_string(),
        fmt_opt(cfg.record_wall_time, format!("{wall_seconds:.3}")),
    ]
}

/// Writes everything under `out_dir/<run_id>/` and returns the report.
pub fn run_experiment_cached(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    cache: &mut ArtifactCache,
) -> Result<ExperimentReport> {
    cfg.validate()?;
    let env = cfg.env()?;
    let run_id = cfg.run_id();
    let run_dir = out_dir.join(&run_id);
    fs::create_dir_all(&run_dir).map_err(io_err(&run_dir))?;
    cfg.save(&run_dir.join("config.json"))?;

    let data_key = key(&(&cfg.env_id, &cfg.dataset));
    if !cache.datasets.contains_key(&data_key) {
        cache.datasets.insert(data_key.clone(), stage_collect(cfg)?);
    }
    let data = &cache.datasets[&data_key];
    write_dataset(data, &run_dir.join("dataset")).map_err(stage("collect"))?;

    let mut writer = csv::Writer::from_path(run_dir.join("metrics.csv")).map_err(stage("report"))?;
    writer.write_record(METRICS_HEADER).map_err(stage("report"))?;
    let mut results = Vec::with_capacity(cfg.seeds.len());
    let mut timing = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let started = Instant::now();
        let seed_dir = run_dir.join(format!("seed_{seed}"));
        fs::create_dir_all(&seed_dir).map_err(io_err(&seed_dir))?;
        let (mixed, k, q) = if cfg.mode.generates() {
            let world_key = key(&(&data_key, &cfg.world, seed));
            if !cache.bundles.contains_key(&world_key) {
                let b = stage_train_world(cfg, data, seed)?;
                cache.bundles.insert(world_key.clone(), b);
            }
            let bundle = &cache.bundles[&world_key];
            save_bundle(bundle, &seed_dir.join("world")).map_err(stage("train-world"))?;
            let (k, q) = if cfg.mode == Mode::Single { (1, 1) } else { (bundle.k(), bundle.q()) };
            let evaluator = if cfg.mode.corrects() { Some(&cfg.evaluator) } else { None };
            let gen_key = key(&(&world_key, &cfg.generation, cfg.mode == Mode::Single, evaluator));
            if !cache.rollouts.contains_key(&gen_key) {
                let g = stage_generate(cfg, cfg.mode, data, bundle, seed)?;
                cache.rollouts.insert(gen_key.clone(), g);
            }
            let generated = &cache.rollouts[&gen_key];
            write_dataset(generated, &seed_dir.join("generated")).map_err(stage("generate"))?;
            (data.mixed_with(generated).map_err(stage("mix"))?, k, q)
        } else {
            (data.clone(), 0, 0)
        };
        let policy = stage_train_policy(cfg, &mixed, seed)?;
        save_policy(&policy, &seed_dir.join("policy")).map_err(stage("train-policy"))?;
        let (mean_return, score) = stage_evaluate(cfg, &env, &policy, seed)?;
        let wall = started.elapsed().as_secs_f64();

        let result = SeedResult {
            seed,
            k,
            q,
            original_transitions: data.num_transitions(),
            generated_transitions: mixed.num_transitions() - data.num_transitions(),
            mean_return,
            normalized_score: score,
        };
        let path = seed_dir.join("result.json");
        fs::write(&path, serde_json::to_string_pretty(&result).expect("result serializes") + "\n")
            .map_err(io_err(&path))?;
        writer
            .write_record(metrics_record(cfg, seed, k, q, mean_return, score, wall))
            .map_err(stage("report"))?;
        writer.flush().map_err(|e| PipelineError::Io { path: run_dir.display().to_string(), source: e })?;
        timing.push(serde_json::json!({ "seed": seed, "wall_seconds": wall }));
        results.push(result);
    }

    let scores: Vec<f64> = results.iter().map(|r| r.normalized_score).collect();
    let (mean_score, std_score) = crate::worldtrain::mean_and_std(&scores);
    let report = ExperimentReport { run_id, env_id: cfg.env_id.clone(), mode: cfg.mode, seeds: results, mean_score, std_score };
    let path = run_dir.join("report.json");
    fs::write(&path, serde_json::to_string_pretty(&report).expect("report serializes") + "\n").map_err(io_err(&path))?;
    let path = run_dir.join("timing.json");
    fs::write(&path, serde_json::to_string_pretty(&timing).expect("timing serializes") + "\n").map_err(io_err(&path))?;
    Ok(report)
}
