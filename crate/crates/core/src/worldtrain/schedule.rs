use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Linear warmup followed by `n_cycles` cosine cycles that restart at
/// `base_lr`. One snapshot is taken at the last step of each cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LRSchedule {
    pub base_lr: f64,
    pub warmup_steps: usize,
    pub cycle_steps: usize,
    pub n_cycles: usize,
}

impl LRSchedule {
    /// 1e-4, 1e5 warmup steps, 5e5 steps per cycle, 4 cycles.
    pub fn full_scale() -> Self {
        Self { base_lr: 1e-4, warmup_steps: 100_000, cycle_steps: 500_000, n_cycles: 4 }
    }

    /// 2000 warmup steps and 8000 steps per cycle. The base rate is raised to
    /// 1e-3 to compensate for the 60x shorter run.
    pub fn desk_scale() -> Self {
        Self { base_lr: 1e-3, warmup_steps: 2_000, cycle_steps: 8_000, n_cycles: 4 }
    }

    /// 500 warmup steps and 2000 steps per cycle, for multi-seed experiments.
    pub fn quick() -> Self {
        Self { base_lr: 1e-3, warmup_steps: 500, cycle_steps: 2_000, n_cycles: 4 }
    }

    pub fn with_cycles(self, n_cycles: usize) -> Self {
        Self { n_cycles, ..self }
    }

    pub fn total_steps(&self) -> usize {
        self.warmup_steps + self.n_cycles * self.cycle_steps
    }

    /// True when step `t` is the final step of a cycle.
    pub fn is_snapshot_step(&self, t: usize) -> bool {
        t >= self.warmup_steps && (t - self.warmup_steps + 1) % self.cycle_steps == 0
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.base_lr > 0.0) || self.warmup_steps == 0 || self.cycle_steps == 0 || self.n_cycles == 0 {
            return Err(format!("schedule fields must be positive: {self:?}"));
        }
        Ok(())
    }
}

/// Learning rate at optimizer step `t`.
pub fn lr_at(t: usize, sched: &LRSchedule) -> f64 {
    let a0 = sched.base_lr;
    if t < sched.warmup_steps {
        (t + 1) as f64 * a0 / sched.warmup_steps as f64
    } else {
        let phase = ((t - sched.warmup_steps) % sched.cycle_steps) as f64 / sched.cycle_steps as f64;
        a0 / 2.0 * (1.0 + (PI * phase).cos())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_values_at_full_scale() {
        let s = LRSchedule::full_scale();
        assert!((lr_at(0, &s) - 1e-9).abs() < 1e-24);
        assert!((lr_at(100_000, &s) - 1e-4).abs() < 1e-18);
        assert!((lr_at(100_000 + 250_000, &s) - 5e-5).abs() < 1e-18);
    }

    #[test]
    fn periodic_after_warmup() {
        let s = LRSchedule::desk_scale();
        for t in (s.warmup_steps..s.warmup_steps + 3 * s.cycle_steps).step_by(37) {
            assert_eq!(lr_at(t, &s), lr_at(t + s.cycle_steps, &s));
        }
    }

    #[test]
    fn snapshot_steps_close_each_cycle() {
        let s = LRSchedule::desk_scale();
        let snaps: Vec<usize> = (0..s.total_steps()).filter(|&t| s.is_snapshot_step(t)).collect();
        assert_eq!(snaps, vec![9_999, 17_999, 25_999, 33_999]);
        // The rate just before each restart is the smallest in its cycle.
        for &t in &snaps {
            assert!(lr_at(t, &s) < lr_at(t - 1, &s));
            assert!(lr_at(t + 1, &s) > lr_at(t, &s));
        }
    }
}
