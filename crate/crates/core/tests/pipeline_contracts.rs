use trajaug_core::data::Source;
use trajaug_core::pipeline::{
    compare_modes, run_experiment, stage_collect, stage_generate, stage_train_world, ExperimentConfig, Mode,
};

fn small(mode: Mode, n_traj: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new("LineReach", mode).unwrap();
    cfg.dataset.n_traj = n_traj;
    cfg.seeds = vec![0];
    cfg.eval_episodes = 5;
    cfg.agent.steps = 100;
    for s in [&mut cfg.world.state_schedule, &mut cfg.world.reward_schedule] {
        s.warmup_steps = 10;
        s.cycle_steps = 20;
        s.n_cycles = 2;
    }
    cfg
}

#[test]
fn original_mode_adds_no_transitions() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_experiment(&small(Mode::Original, 20), dir.path()).unwrap();
    assert_eq!(report.generated_transitions(), 0);
    assert_eq!(report.seeds[0].original_transitions, 1000);
    assert!(!dir.path().join(report.run_id).join("seed_0").join("world").exists());
}

#[test]
fn otto_hits_the_augmentation_ratio() {
    // 200 trajectories of 50 steps, h = 10 and ratio 0.1: 100 segments.
    let cfg = small(Mode::Otto, 200);
    assert_eq!((cfg.generation.horizon, cfg.generation.ratio), (10, 0.1));
    let dir = tempfile::tempdir().unwrap();
    let report = run_experiment(&cfg, dir.path()).unwrap();
    assert_eq!(report.seeds[0].original_transitions, 10_000);
    assert_eq!(report.generated_transitions(), 1000);
    assert_eq!((report.seeds[0].k, report.seeds[0].q), (2, 2));
}

#[test]
fn correction_only_changes_rewards() {
    let cfg = small(Mode::Otto, 20);
    let data = stage_collect(&cfg).unwrap();
    let bundle = stage_train_world(&cfg, &data, 0).unwrap();
    let raw = stage_generate(&cfg, Mode::NoCorrect, &data, &bundle, 0).unwrap();
    let corrected = stage_generate(&cfg, Mode::Otto, &data, &bundle, 0).unwrap();
    assert_eq!(raw.count_source(Source::Generated), 100);
    let mut changed = 0;
    for (a, b) in raw.trajectories.iter().zip(&corrected.trajectories) {
        for (x, y) in a.steps.iter().zip(&b.steps) {
            assert_eq!((&x.state, &x.action, x.t), (&y.state, &y.action, y.t));
            changed += usize::from(x.reward != y.reward);
        }
    }
    assert!(changed > 0);
}

#[test]
fn modes_share_one_comparison_table() {
    let cfgs: Vec<_> = [Mode::Otto, Mode::Original, Mode::Single].map(|m| small(m, 10)).to_vec();
    let dir = tempfile::tempdir().unwrap();
    let cmp = compare_modes(&cfgs, dir.path()).unwrap();
    let modes: Vec<Mode> = cmp.rows.iter().map(|r| r.mode).collect();
    assert_eq!(modes, vec![Mode::Original, Mode::Single, Mode::Otto]);
    let single = cmp.reports.iter().find(|r| r.mode == Mode::Single).unwrap();
    assert_eq!((single.seeds[0].k, single.seeds[0].q), (1, 1));
    assert_eq!(cmp.row(Mode::Original).unwrap().delta, Some(0.0));
    assert!(dir.path().join("comparison.csv").exists());
}

#[test]
fn config_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    let cfg = small(Mode::Single, 7);
    cfg.save(&path).unwrap();
    let back = ExperimentConfig::load(&path).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.run_id(), "LineReach-medium-single");
}
