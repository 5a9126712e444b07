//! Uncertainty-penalized reward correction for generated trajectories.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generate::GeneratedTrajectory;

#[derive(Debug, Error, PartialEq)]
pub enum EvaluatorError {
    #[error("state std vector is empty")]
    EmptyStd,
    #[error("negative or non-finite uncertainty {0}")]
    BadUncertainty(f64),
    #[error("correction needs at least 2 steps, got {0}")]
    TooShort(usize),
    #[error("temperature must be positive, got {0}")]
    Temperature(f64),
    #[error("length mismatch: {rewards} rewards, {reward_std} reward stds, {state_std} state stds")]
    Length { rewards: usize, reward_std: usize, state_std: usize },
}

pub type Result<T> = std::result::Result<T, EvaluatorError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluatorConfig {
    pub omega: f64,
    /// `false` passes predicted rewards through unchanged.
    pub correct: bool,
}

impl Default for EvaluatorConfig {
    fn default() -> Self {
        Self { omega: 0.7, correct: true }
    }
}

impl EvaluatorConfig {
    pub fn pass_through() -> Self {
        Self { correct: false, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0) || !self.omega.is_finite() {
            return Err(EvaluatorError::Temperature(self.omega));
        }
        Ok(())
    }
}

/// Mean of the per-dimension std.
pub fn state_uncertainty(per_dim_std: &[f64]) -> Result<f64> {
    if per_dim_std.is_empty() {
        return Err(EvaluatorError::EmptyStd);
    }
    if let Some(&bad) = per_dim_std.iter().find(|s| !(**s >= 0.0) || !s.is_finite()) {
        return Err(EvaluatorError::BadUncertainty(bad));
    }
    Ok(per_dim_std.iter().sum::<f64>() / per_dim_std.len() as f64)
}

/// `1 - softmax(sigma_s / omega)` over the whole trajectory.
pub fn correction_factors(state_sigma: &[f64], omega: f64) -> Result<Vec<f64>> {
    if state_sigma.len() < 2 {
        return Err(EvaluatorError::TooShort(state_sigma.len()));
    }
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(EvaluatorError::Temperature(omega));
    }
    if let Some(&bad) = state_sigma.iter().find(|s| !(**s >= 0.0) || !s.is_finite()) {
        return Err(EvaluatorError::BadUncertainty(bad));
    }
    let max = state_sigma.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = state_sigma.iter().map(|s| ((s - max) / omega).exp()).collect();
    let total: f64 = w.iter().sum();
    // Summing the other weights avoids cancellation in 1 - w_t when w_t ~ 1.
    Ok((0..w.len()).map(|t| (total - w[t]) / total).collect())
}

/// `r*_t = (1 - softmax_t(sigma_s / omega)) * (r_t - sigma_r_t)`.
pub fn correct_rewards(rewards: &[f64], reward_std: &[f64], state_sigma: &[f64], omega: f64) -> Result<Vec<f64>> {
    if rewards.len() != reward_std.len() || rewards.len() != state_sigma.len() {
        return Err(EvaluatorError::Length {
            rewards: rewards.len(),
            reward_std: reward_std.len(),
            state_std: state_sigma.len(),
        });
    }
    if let Some(&bad) = reward_std.iter().find(|s| !(**s >= 0.0) || !s.is_finite()) {
        return Err(EvaluatorError::BadUncertainty(bad));
    }
    let factors = correction_factors(state_sigma, omega)?;
    Ok(factors.iter().zip(rewards.iter().zip(reward_std)).map(|(f, (r, s))| f * (r - s)).collect())
}

/// Rewards to store for `g` under `cfg`.
pub fn evaluate_trajectory(g: &GeneratedTrajectory, cfg: &EvaluatorConfig) -> Result<Vec<f64>> {
    if !cfg.correct {
        return Ok(g.rewards.clone());
    }
    let sigma = g.state_std.iter().map(|s| state_uncertainty(s)).collect::<Result<Vec<_>>>()?;
    correct_rewards(&g.rewards, &g.reward_std, &sigma, cfg.omega)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < tol)
    }

    #[test]
    fn uncertainty_is_the_mean() {
        assert!((state_uncertainty(&[0.2, 0.4]).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(state_uncertainty(&[0.0, 0.0]).unwrap(), 0.0);
        assert!((state_uncertainty(&[0.1, 0.1, 0.7]).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(state_uncertainty(&[]), Err(EvaluatorError::EmptyStd));
        assert!(state_uncertainty(&[-0.1]).is_err());
    }

    #[test]
    fn uniform_uncertainty_example() {
        let r = correct_rewards(&[0.9; 3], &[0.0; 3], &[0.5; 3], 0.7).unwrap();
        assert!(close(&r, &[0.6; 3], 1e-12));
    }

    #[test]
    fn worked_examples() {
        // weights (2/3, 1/3) since exp(ln 2) = 2
        let r = correct_rewards(&[0.9, 0.9], &[0.0, 0.0], &[2f64.ln(), 0.0], 1.0).unwrap();
        assert!(close(&r, &[0.3, 0.6], 1e-12));
        let r = correct_rewards(&[1.0, -0.5], &[0.2, 0.1], &[0.0, 0.0], 0.7).unwrap();
        assert!(close(&r, &[0.4, -0.3], 1e-12));
    }

    #[test]
    fn errors() {
        assert_eq!(correct_rewards(&[1.0], &[0.0], &[0.0], 1.0), Err(EvaluatorError::TooShort(1)));
        assert_eq!(correct_rewards(&[1.0; 2], &[0.0; 2], &[0.0; 2], 0.0), Err(EvaluatorError::Temperature(0.0)));
        assert!(matches!(correct_rewards(&[1.0; 2], &[0.0; 3], &[0.0; 2], 1.0), Err(EvaluatorError::Length { .. })));
        assert!(correct_rewards(&[1.0; 2], &[-0.1, 0.0], &[0.0; 2], 1.0).is_err());
    }

    #[test]
    fn extreme_disagreement_stays_in_range() {
        let f = correction_factors(&[1e3, 0.0, 0.0], 1e-3).unwrap();
        assert!(f.iter().all(|x| x.is_finite()));
        assert!((f.iter().sum::<f64>() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn pass_through_keeps_rewards() {
        let g = GeneratedTrajectory {
            source_traj: 0,
            t_s: 0,
            start_state: vec![0.0],
            actions: vec![vec![0.0]; 2],
            rewards: vec![1.0, 2.0],
            next_states: vec![vec![0.0]; 2],
            state_std: vec![vec![0.1], vec![0.3]],
            reward_std: vec![0.5, 0.5],
        };
        assert_eq!(evaluate_trajectory(&g, &EvaluatorConfig::pass_through()).unwrap(), vec![1.0, 2.0]);
        let r = evaluate_trajectory(&g, &EvaluatorConfig::default()).unwrap();
        assert!(r[0] < 0.5 && r[1] < 1.5);
    }
}
