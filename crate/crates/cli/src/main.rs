use std::fs::OpenOptions;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use trajaug_core::agent::{load_policy, save_policy};
use trajaug_core::data::{read_dataset, write_dataset};
use trajaug_core::pipeline::{
    compare_modes, metrics_record, run_experiment, stage_collect, stage_evaluate, stage_generate, stage_train_policy,
    stage_train_world, ExperimentConfig, Mode, METRICS_HEADER,
};
use trajaug_core::worldtrain::{load_bundle, save_bundle};

/// Offline trajectory augmentation with ensemble sequence world models.
#[derive(Debug, Parser)]
#[command(name = "trajaug", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a default experiment config.
    InitConfig {
        #[arg(long, default_value = "LineReach")]
        env: String,
        #[arg(long, default_value = "otto")]
        mode: Mode,
        #[arg(long)]
        out: PathBuf,
    },
    /// Collect the behavior dataset described by the config.
    Collect {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the dataset seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the state and reward ensembles.
    TrainWorld {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Roll out (and correct) augmented trajectories.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        world: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Defaults to the config's mode.
        #[arg(long)]
        mode: Option<Mode>,
    },
    /// Train a policy on the original data plus optional generated data.
    TrainPolicy {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        generated: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Evaluate a saved policy; appends a metrics row when `--out` is given.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full pipeline for every configured seed.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        /// Run only this seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        mode: Option<Mode>,
    },
    /// Run several modes on one dataset and tabulate them.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "original,single,no_correct,otto")]
        modes: Vec<Mode>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn load_config(path: &Path, seed: Option<u64>, mode: Option<Mode>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(s) = seed {
        cfg.seeds = vec![s];
    }
    if let Some(m) = mode {
        cfg.mode = m;
    }
    Ok(cfg)
}

fn print_json(value: serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(&value).expect("json value serializes"));
}

fn append_metrics(path: &Path, record: [String; 13]) -> Result<()> {
    let fresh = !path.exists() || std::fs::metadata(path)?.len() == 0;
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::Writer::from_writer(file);
    if fresh {
        w.write_record(METRICS_HEADER)?;
    }
    w.write_record(record)?;
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::InitConfig { env, mode, out } => {
            let cfg = ExperimentConfig::new(&env, mode)?;
            cfg.save(&out)?;
            print_json(serde_json::json!({ "config": out }));
        }
        Command::Collect { config, out, seed } => {
            let mut cfg = load_config(&config, None, None)?;
            if let Some(s) = seed {
                cfg.dataset.seed = s;
            }
            let d = stage_collect(&cfg)?;
            write_dataset(&d, &out)?;
            print_json(serde_json::json!({
                "trajectories": d.trajectories.len(),
                "transitions": d.num_transitions(),
                "mean_return": d.mean_return(),
            }));
        }
        Command::TrainWorld { config, data, out, seed } => {
            let cfg = load_config(&config, None, None)?;
            let d = read_dataset(&data)?;
            let bundle = stage_train_world(&cfg, &d, seed)?;
            save_bundle(&bundle, &out)?;
            print_json(serde_json::json!({ "K": bundle.k(), "Q": bundle.q() }));
        }
        Command::Generate { config, data, world, out, seed, mode } => {
            let cfg = load_config(&config, None, mode)?;
            if !cfg.mode.generates() {
                bail!("mode `original` does not generate data");
            }
            let d = read_dataset(&data)?;
            let bundle = load_bundle(&world)?;
            let g = stage_generate(&cfg, cfg.mode, &d, &bundle, seed)?;
            write_dataset(&g, &out)?;
            print_json(serde_json::json!({
                "trajectories": g.trajectories.len(),
                "transitions": g.num_transitions(),
            }));
        }
        Command::TrainPolicy { config, data, generated, out, seed } => {
            let cfg = load_config(&config, None, None)?;
            let mut d = read_dataset(&data)?;
            if let Some(g) = generated {
                d = d.mixed_with(&read_dataset(&g)?)?;
            }
            let policy = stage_train_policy(&cfg, &d, seed)?;
            save_policy(&policy, &out)?;
            print_json(serde_json::json!({ "transitions": d.num_transitions() }));
        }
        Command::Evaluate { config, policy, seed, out } => {
            let cfg = load_config(&config, None, None)?;
            let env = cfg.env()?;
            let p = load_policy(&policy)?;
            let (mean_return, score) = stage_evaluate(&cfg, &env, &p, seed)?;
            if let Some(path) = out {
                append_metrics(&path, metrics_record(&cfg, seed, 0, 0, mean_return, score, 0.0))?;
            }
            print_json(serde_json::json!({ "mean_return": mean_return, "normalized_score": score }));
        }
        Command::Experiment { config, out, seed, mode } => {
            let cfg = load_config(&config, seed, mode)?;
            let report = run_experiment(&cfg, &out)?;
            print_json(serde_json::to_value(&report)?);
        }
        Command::Compare { config, out, modes, seed } => {
            let cfg = load_config(&config, seed, None)?;
            let cfgs: Vec<ExperimentConfig> = modes.iter().map(|&m| cfg.with_mode(m)).collect();
            let table = compare_modes(&cfgs, &out)?;
            println!("{:<12} {:>10} {:>8} {:>8}", "mode", "mean", "std", "delta");
            for r in &table.rows {
                let delta = r.delta.map(|d| format!("{d:+.2}")).unwrap_or_default();
                println!("{:<12} {:>10.2} {:>8.2} {:>8}", r.mode.as_str(), r.mean_score, r.std_score, delta);
            }
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
