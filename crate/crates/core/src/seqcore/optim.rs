use serde::{Deserialize, Serialize};

use super::{Result, SeqError};

/// AdamW state with global-norm gradient clipping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Maximum global L2 norm; non-positive disables clipping.
    pub grad_clip: f64,
}

impl OptimizerState {
    /// World-model defaults: weight decay 1e-4, clip 0.25.
    pub fn new(n_params: usize) -> Self {
        Self::with(n_params, 1e-4, 0.25)
    }

    pub fn with(n_params: usize, weight_decay: f64, grad_clip: f64) -> Self {
        Self {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            grad_clip,
        }
    }
}

/// Scales `grads` in place so its L2 norm is at most `max_norm`; returns the
/// factor applied.
pub fn clip_gradients(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let scale = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= scale);
        scale
    } else {
        1.0
    }
}

/// One clipped AdamW update. Weight decay is decoupled from the adaptive step.
/// Returns the clipping factor.
pub fn optimizer_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut OptimizerState,
    lr: f64,
) -> Result<f64> {
    if params.len() != grads.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(SeqError::Shape(format!(
            "params {} grads {} moments {}/{}",
            params.len(),
            grads.len(),
            state.m.len(),
            state.v.len()
        )));
    }
    if !grads.iter().all(|g| g.is_finite()) {
        return Err(SeqError::NonFiniteGradient);
    }
    let mut g = grads.to_vec();
    let scale = clip_gradients(&mut g, state.grad_clip);
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for i in 0..params.len() {
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g[i];
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g[i] * g[i];
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= lr * (m_hat / (v_hat.sqrt() + state.eps) + state.weight_decay * params[i]);
    }
    Ok(scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_without_decay_is_a_fixed_point() {
        let mut params = vec![0.3, -1.2, 4.0];
        let before = params.clone();
        let mut st = OptimizerState::with(3, 0.0, 0.25);
        for _ in 0..5 {
            optimizer_step(&mut params, &[0.0; 3], &mut st, 1e-2).unwrap();
        }
        assert_eq!(params, before);
        assert_eq!(st.step, 5);
    }

    #[test]
    fn first_step_moves_each_component_by_lr() {
        // m_hat = g and v_hat = g^2, so the step is lr * g / (|g| + eps).
        let grads = [0.5, -2.0, 1e-3];
        let mut params = vec![0.0; 3];
        let mut st = OptimizerState::with(3, 0.0, 0.0);
        let lr = 1e-3;
        optimizer_step(&mut params, &grads, &mut st, lr).unwrap();
        for (p, g) in params.iter().zip(grads) {
            let expected = -lr * g / (g.abs() + 1e-8);
            assert!((p - expected).abs() < 1e-15);
            assert!((p.abs() - lr).abs() < 1e-8);
        }
    }

    #[test]
    fn clipping_threshold() {
        // Norm at the threshold passes untouched.
        let mut g = vec![0.6, 0.8];
        assert_eq!(clip_gradients(&mut g, 1.0), 1.0);
        assert_eq!(g, vec![0.6, 0.8]);
        // Norm 2.5 against the default 0.25 scales by 0.1.
        let mut g = vec![1.5, 2.0];
        let s = clip_gradients(&mut g, 0.25);
        assert!((s - 0.1).abs() < 1e-15);
        assert!((g[0] - 0.15).abs() < 1e-15 && (g[1] - 0.2).abs() < 1e-15);
        // Below the default threshold nothing changes.
        let mut g = vec![0.1, 0.0];
        assert_eq!(clip_gradients(&mut g, 0.25), 1.0);
    }

    #[test]
    fn decoupled_weight_decay_shrinks_params() {
        let mut params = vec![2.0];
        let mut st = OptimizerState::with(1, 0.5, 0.0);
        optimizer_step(&mut params, &[0.0], &mut st, 0.1).unwrap();
        assert!((params[0] - (2.0 - 0.1 * 0.5 * 2.0)).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut params = vec![0.0; 2];
        let mut st = OptimizerState::new(2);
        let err = optimizer_step(&mut params, &[f64::NAN, 0.0], &mut st, 1e-3).unwrap_err();
        assert!(matches!(err, SeqError::NonFiniteGradient));
        assert_eq!(st.step, 0);
    }
}
