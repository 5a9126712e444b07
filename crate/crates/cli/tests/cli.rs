use std::path::Path;
use std::process::{Command, Output};

fn trajaug(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trajaug")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = trajaug(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// A default config shrunk so every stage finishes in about a second.
fn tiny_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("config.json");
    ok(&["init-config", "--env", "LineReach", "--mode", "otto", "--out", p(&path)]);
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    v["dataset"]["n_traj"] = 10.into();
    v["seeds"] = serde_json::json!([3]);
    v["eval_episodes"] = 5.into();
    v["agent"]["steps"] = 100.into();
    for head in ["state_schedule", "reward_schedule"] {
        v["world"][head]["warmup_steps"] = 10.into();
        v["world"][head]["cycle_steps"] = 20.into();
        v["world"][head]["n_cycles"] = 2.into();
    }
    std::fs::write(&path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    path
}

#[test]
fn stage_by_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let (data, world, gen, policy) =
        (dir.path().join("data"), dir.path().join("world"), dir.path().join("gen"), dir.path().join("policy"));

    let out = ok(&["collect", "--config", p(&cfg), "--out", p(&data)]);
    assert!(out.contains("\"transitions\": 500"));
    assert!(data.join("meta.json").exists() && data.join("data.bin").exists());

    let out = ok(&["train-world", "--config", p(&cfg), "--data", p(&data), "--out", p(&world), "--seed", "1"]);
    assert!(out.contains("\"K\": 2"));
    assert!(world.join("bundle.json").exists());

    let out = ok(&["generate", "--config", p(&cfg), "--data", p(&data), "--world", p(&world), "--out", p(&gen)]);
    // floor(0.1 * 500 / 10) = 5 segments of 10 steps
    assert!(out.contains("\"transitions\": 50"));
    let meta = std::fs::read_to_string(gen.join("meta.json")).unwrap();
    assert!(meta.contains("generated"));

    let out = ok(&[
        "train-policy", "--config", p(&cfg), "--data", p(&data), "--generated", p(&gen), "--out", p(&policy),
    ]);
    assert!(out.contains("\"transitions\": 550"));

    let metrics = dir.path().join("metrics.csv");
    for _ in 0..2 {
        let out = ok(&["evaluate", "--config", p(&cfg), "--policy", p(&policy), "--out", p(&metrics)]);
        assert!(out.contains("normalized_score"));
    }
    let text = std::fs::read_to_string(&metrics).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("run_id,mode,strategy,seed,delta,epsilon,h,omega,K,Q,mean_return"));
    assert_eq!(lines[1], lines[2]);
}

#[test]
fn experiment_and_compare() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let runs = dir.path().join("runs");
    let out = ok(&["experiment", "--config", p(&cfg), "--out", p(&runs), "--mode", "original"]);
    assert!(out.contains("\"generated_transitions\": 0"));
    let metrics = std::fs::read_to_string(runs.join("LineReach-medium-original/metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 2);

    let out = ok(&["compare", "--config", p(&cfg), "--out", p(&runs), "--modes", "otto,original"]);
    let rows: Vec<&str> = out.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("original") && rows[1].starts_with("otto"));
    assert!(runs.join("comparison.csv").exists());
    assert!(runs.join("LineReach-medium-otto/seed_3/world/bundle.json").exists());
    assert!(runs.join("LineReach-medium-otto/seed_3/generated/data.bin").exists());
}

#[test]
fn errors_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"format_version\": 1}").unwrap();
    let out = trajaug(&["experiment", "--config", p(&bad), "--out", p(dir.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("invalid experiment config"));

    let cfg = tiny_config(dir.path());
    let out = trajaug(&["compare", "--config", p(&cfg), "--modes", "otto"]);
    assert!(!out.status.success());
    let out = trajaug(&["experiment", "--config", p(&cfg), "--mode", "sideways"]);
    assert!(!out.status.success());
}
