use std::collections::HashSet;

use super::{GenerateError, GenerationConfig, Result, Strategy};
use crate::data::{OfflineDataset, Step};
use crate::rng::SplitMix64;

/// A length-`len` slice of trajectory `traj` starting at position `start`.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub traj: usize,
    pub start: usize,
    pub len: usize,
    pub cumulative_reward: f64,
}

impl Segment {
    pub fn steps<'a>(&self, d: &'a OfflineDataset) -> &'a [Step] {
        &d.trajectories[self.traj].steps[self.start..self.start + self.len]
    }

    /// Episode step index of the first contained step.
    pub fn start_step(&self, d: &OfflineDataset) -> usize {
        d.trajectories[self.traj].steps[self.start].t
    }

    fn key(&self) -> (usize, usize) {
        (self.traj, self.start)
    }
}

fn crosses_terminal(steps: &[Step]) -> bool {
    steps[..steps.len() - 1].iter().any(|s| s.terminal)
}

fn make_segment(d: &OfflineDataset, traj: usize, start: usize, h: usize) -> Option<Segment> {
    let steps = &d.trajectories[traj].steps[start..start + h];
    if crosses_terminal(steps) {
        return None;
    }
    Some(Segment { traj, start, len: h, cumulative_reward: steps.iter().map(|s| s.reward).sum() })
}

/// Non-overlapping windows at offsets `0, h, 2h, ...`; short tails and
/// windows with an interior terminal are dropped.
pub fn split_segments(d: &OfflineDataset, h: usize) -> Vec<Segment> {
    d.trajectories
        .iter()
        .enumerate()
        .flat_map(|(i, t)| (0..t.len() / h).filter_map(move |j| make_segment(d, i, j * h, h)))
        .collect()
}

/// `N = floor(ratio * |D| / h)`.
pub fn num_segments(d: &OfflineDataset, cfg: &GenerationConfig) -> usize {
    (cfg.ratio * d.num_transitions() as f64 / cfg.horizon as f64).floor() as usize
}

/// The `n` highest-return segments; ties go to the lower `(traj, start)`.
pub fn select_top_n(segments: &[Segment], n: usize) -> Result<Vec<Segment>> {
    if n == 0 {
        return Err(GenerateError::Config("N must be positive".into()));
    }
    if n > segments.len() {
        return Err(GenerateError::NotEnoughSegments { requested: n, available: segments.len() });
    }
    let mut order: Vec<&Segment> = segments.iter().collect();
    order.sort_by(|a, b| {
        b.cumulative_reward
            .total_cmp(&a.cumulative_reward)
            .then_with(|| a.key().cmp(&b.key()))
    });
    Ok(order.into_iter().take(n).cloned().collect())
}

/// `exp(score / temperature)` normalized, computed stably.
pub fn softmax_probabilities(scores: &[f64], temperature: f64) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = scores.iter().map(|s| ((s - max) / temperature).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

fn zscore(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if std < 1e-12 {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - mean) / std).collect()
}

/// `n` draws without replacement, each proportional to
/// `exp(score / temperature)` over the segments still available.
pub fn select_softmax(
    segments: &[Segment],
    n: usize,
    temperature: f64,
    zscore_returns: bool,
    rng: &mut SplitMix64,
) -> Result<Vec<Segment>> {
    if n == 0 {
        return Err(GenerateError::Config("N must be positive".into()));
    }
    if n > segments.len() {
        return Err(GenerateError::NotEnoughSegments { requested: n, available: segments.len() });
    }
    let returns: Vec<f64> = segments.iter().map(|s| s.cumulative_reward).collect();
    let scores = if zscore_returns { zscore(&returns) } else { returns };
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut weights: Vec<f64> = scores.iter().map(|s| ((s - max) / temperature).exp()).collect();
    let mut picked = Vec::with_capacity(n);
    for _ in 0..n {
        let total: f64 = weights.iter().sum();
        let mut u = rng.unit() * total;
        let mut choice = None;
        for (i, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            choice = Some(i);
            if u < w {
                break;
            }
            u -= w;
        }
        let i = choice.expect("at least one segment remains");
        weights[i] = 0.0;
        picked.push(segments[i].clone());
    }
    Ok(picked)
}

/// `n` distinct `(trajectory, start)` pairs: trajectory uniform, then start
/// uniform in `[0, len - h]`. Windows may overlap.
pub fn select_random(d: &OfflineDataset, h: usize, n: usize, rng: &mut SplitMix64) -> Result<Vec<Segment>> {
    if n == 0 {
        return Err(GenerateError::Config("N must be positive".into()));
    }
    let eligible: Vec<usize> = (0..d.trajectories.len()).filter(|&i| d.trajectories[i].len() >= h).collect();
    let available: usize = eligible
        .iter()
        .map(|&i| (0..=d.trajectories[i].len() - h).filter(|&s| make_segment(d, i, s, h).is_some()).count())
        .sum();
    if n > available {
        return Err(GenerateError::NotEnoughSegments { requested: n, available });
    }
    let mut seen = HashSet::with_capacity(n);
    let mut picked = Vec::with_capacity(n);
    while picked.len() < n {
        let traj = eligible[rng.below(eligible.len())];
        let start = rng.below(d.trajectories[traj].len() - h + 1);
        if seen.contains(&(traj, start)) {
            continue;
        }
        if let Some(seg) = make_segment(d, traj, start, h) {
            seen.insert((traj, start));
            picked.push(seg);
        }
    }
    Ok(picked)
}

/// Dispatches on `cfg.strategy`.
pub fn select_segments(
    d: &OfflineDataset,
    cfg: &GenerationConfig,
    n: usize,
    rng: &mut SplitMix64,
) -> Result<Vec<Segment>> {
    cfg.validate()?;
    match cfg.strategy {
        Strategy::Random => select_random(d, cfg.horizon, n, rng),
        Strategy::TopN => select_top_n(&split_segments(d, cfg.horizon), n),
        Strategy::Softmax => select_softmax(
            &split_segments(d, cfg.horizon),
            n,
            cfg.selection_temperature,
            cfg.zscore_returns,
            rng,
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{collect_dataset, BehaviorPolicy, EnvSpec, Source, Trajectory};

    fn constant_dataset(lengths: &[usize], reward: f64) -> OfflineDataset {
        let env = EnvSpec::line_reach();
        let trajs = lengths
            .iter()
            .map(|&n| Trajectory {
                steps: (0..n)
                    .map(|t| Step { state: vec![0.0, 0.0], action: vec![0.0], reward, terminal: t + 1 == n, t })
                    .collect(),
                source: Source::Collected,
            })
            .collect();
        OfflineDataset::from_collected(&env, 0, trajs).unwrap()
    }

    fn seg(traj: usize, r: f64) -> Segment {
        Segment { traj, start: 0, len: 2, cumulative_reward: r }
    }

    #[test]
    fn split_counts_and_tail() {
        assert_eq!(split_segments(&constant_dataset(&[50], 0.0), 10).len(), 5);
        assert_eq!(split_segments(&constant_dataset(&[55], 0.0), 10).len(), 5);
        let segs = split_segments(&constant_dataset(&[50, 30], 0.1), 10);
        assert_eq!(segs.len(), 8);
        for s in &segs {
            assert!((s.cumulative_reward - 1.0).abs() < 1e-12);
            assert_eq!(s.start % 10, 0);
        }
    }

    #[test]
    fn interior_terminal_windows_are_dropped() {
        let mut d = constant_dataset(&[20], 0.0);
        d.trajectories[0].steps[4].terminal = true;
        let segs = split_segments(&d, 10);
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].start, 10);
        // A terminal on the final step is allowed.
        let segs = split_segments(&constant_dataset(&[10], 0.0), 10);
        assert_eq!(segs.len(), 1);
    }

    #[test]
    fn top_n_worked_example() {
        let segs: Vec<Segment> = [5.0, 3.0, 9.0, 1.0].iter().enumerate().map(|(i, &r)| seg(i, r)).collect();
        let top = select_top_n(&segs, 2).unwrap();
        let r: Vec<f64> = top.iter().map(|s| s.cumulative_reward).collect();
        assert_eq!(r, vec![9.0, 5.0]);
        assert!(matches!(select_top_n(&segs, 0), Err(GenerateError::Config(_))));
        assert!(matches!(select_top_n(&segs, 5), Err(GenerateError::NotEnoughSegments { .. })));
    }

    #[test]
    fn top_n_ties_prefer_lower_ids() {
        let segs = vec![seg(3, 1.0), seg(1, 1.0), seg(2, 2.0), seg(0, 1.0)];
        let top = select_top_n(&segs, 3).unwrap();
        let ids: Vec<usize> = top.iter().map(|s| s.traj).collect();
        assert_eq!(ids, vec![2, 0, 1]);
    }

    #[test]
    fn softmax_probability_values() {
        let p = softmax_probabilities(&[0.0, 0.0, 0.0], 1.0);
        assert!(p.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
        let p = softmax_probabilities(&[1.0, 0.0], 1.0);
        let e = std::f64::consts::E;
        assert!((p[0] - e / (e + 1.0)).abs() < 1e-15);
        assert!((p[0] - 0.7311).abs() < 1e-4);
    }

    #[test]
    fn softmax_draws_are_distinct() {
        let segs: Vec<Segment> = (0..20).map(|i| seg(i, i as f64)).collect();
        let mut rng = SplitMix64::new(4);
        let picked = select_softmax(&segs, 20, 1.0, true, &mut rng).unwrap();
        let mut ids: Vec<usize> = picked.iter().map(|s| s.traj).collect();
        ids.sort();
        assert_eq!(ids, (0..20).collect::<Vec<_>>());
    }

    #[test]
    fn random_selection_respects_bounds() {
        let d = collect_dataset(&EnvSpec::line_reach(), BehaviorPolicy::Medium, 5, 2).unwrap();
        let mut rng = SplitMix64::new(8);
        let picked = select_random(&d, 10, 30, &mut rng).unwrap();
        let keys: HashSet<(usize, usize)> = picked.iter().map(|s| (s.traj, s.start)).collect();
        assert_eq!(keys.len(), 30);
        assert!(picked.iter().all(|s| s.start + 10 <= 50 && s.len == 10));
        // 5 trajectories x 41 start positions.
        assert!(select_random(&d, 10, 205, &mut rng).is_ok());
        assert!(matches!(select_random(&d, 10, 206, &mut rng), Err(GenerateError::NotEnoughSegments { .. })));
    }

    #[test]
    fn segment_count_rule() {
        let d = constant_dataset(&[50; 200], 0.0);
        assert_eq!(d.num_transitions(), 10_000);
        let cfg = GenerationConfig { horizon: 10, ratio: 0.1, ..Default::default() };
        assert_eq!(num_segments(&d, &cfg), 100);
        let cfg = GenerationConfig { horizon: 30, ratio: 0.1, ..Default::default() };
        assert_eq!(num_segments(&d, &cfg), 33);
    }
}
