use super::mlp::{Activation, Mlp};
use super::policy::Policy;
use super::{AgentConfig, AgentError, Result};
use crate::data::OfflineDataset;
use crate::rng::SplitMix64;
use crate::seqcore::{optimizer_step, OptimizerState};

/// Flattened transitions with normalized states and actions scaled to
/// `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct Transitions {
    pub d_s: usize,
    pub d_a: usize,
    pub states: Vec<f64>,
    pub actions: Vec<f64>,
    pub rewards: Vec<f64>,
    pub next_states: Vec<f64>,
    pub done: Vec<f64>,
    /// False for the final step of a truncated (generated) trajectory,
    /// which has no successor to bootstrap from.
    pub has_target: Vec<bool>,
}

impl Transitions {
    pub fn from_dataset(d: &OfflineDataset, low: &[f64], high: &[f64]) -> Self {
        let norm = |s: &[f64], out: &mut Vec<f64>| {
            out.extend(s.iter().zip(d.stats.state_mean.iter().zip(&d.stats.state_std)).map(|(x, (m, sd))| (x - m) / sd))
        };
        let mut t = Transitions {
            d_s: d.d_s,
            d_a: d.d_a,
            states: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            next_states: Vec::new(),
            done: Vec::new(),
            has_target: Vec::new(),
        };
        for traj in &d.trajectories {
            for (i, step) in traj.steps.iter().enumerate() {
                norm(&step.state, &mut t.states);
                t.actions.extend(
                    step.action.iter().enumerate().map(|(j, a)| 2.0 * (a - low[j]) / (high[j] - low[j]) - 1.0),
                );
                t.rewards.push(step.reward);
                match traj.steps.get(i + 1) {
                    Some(next) if !step.terminal => {
                        norm(&next.state, &mut t.next_states);
                        t.done.push(0.0);
                        t.has_target.push(true);
                    }
                    _ => {
                        norm(&step.state, &mut t.next_states);
                        t.done.push(1.0);
                        t.has_target.push(step.terminal);
                    }
                }
            }
        }
        t
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

fn concat(states: &[f64], d_s: usize, actions: &[f64], d_a: usize, n: usize) -> Vec<f64> {
    let mut x = Vec::with_capacity(n * (d_s + d_a));
    for r in 0..n {
        x.extend_from_slice(&states[r * d_s..(r + 1) * d_s]);
        x.extend_from_slice(&actions[r * d_a..(r + 1) * d_a]);
    }
    x
}

fn gather(src: &[f64], dim: usize, idx: &[usize]) -> Vec<f64> {
    idx.iter().flat_map(|&i| src[i * dim..(i + 1) * dim].iter().copied()).collect()
}

pub fn train_policy(d: &OfflineDataset, cfg: &AgentConfig, low: &[f64], high: &[f64]) -> Result<Policy> {
    train_policy_logged(d, cfg, low, high, 0, &mut |_, _| {})
}

/// Like [`train_policy`], calling `on_log(step, policy)` every `log_every`
/// steps (never when `log_every` is 0).
pub fn train_policy_logged(
    d: &OfflineDataset,
    cfg: &AgentConfig,
    low: &[f64],
    high: &[f64],
    log_every: usize,
    on_log: &mut dyn FnMut(usize, &Policy),
) -> Result<Policy> {
    cfg.validate()?;
    if low.len() != d.d_a || high.len() != d.d_a {
        return Err(AgentError::Config("action bounds do not match the dataset".into()));
    }
    let data = Transitions::from_dataset(d, low, high);
    if data.is_empty() {
        return Err(AgentError::EmptyDataset);
    }
    let (d_s, d_a) = (d.d_s, d.d_a);
    let mut init = SplitMix64::stream(cfg.seed, 0);
    let mut rng = SplitMix64::stream(cfg.seed, 1);
    let hidden = vec![cfg.hidden; cfg.depth];
    let actor_sizes = [vec![d_s], hidden.clone(), vec![d_a]].concat();
    let critic_sizes = [vec![d_s + d_a], hidden, vec![1]].concat();
    let mut actor = Mlp::new(actor_sizes, Activation::Tanh, &mut init);
    let mut critics = [
        Mlp::new(critic_sizes.clone(), Activation::Identity, &mut init),
        Mlp::new(critic_sizes, Activation::Identity, &mut init),
    ];
    let mut actor_target = actor.clone();
    let mut critic_targets = critics.clone();
    let mut actor_opt = OptimizerState::with(actor.num_params(), 0.0, 0.0);
    let mut critic_opts = [
        OptimizerState::with(critics[0].num_params(), 0.0, 0.0),
        OptimizerState::with(critics[1].num_params(), 0.0, 0.0),
    ];
    let snapshot = |actor: &Mlp, critics: &[Mlp; 2]| Policy {
        actor: actor.clone(),
        critics: critics.clone(),
        state_mean: d.stats.state_mean.clone(),
        state_std: d.stats.state_std.clone(),
        action_low: low.to_vec(),
        action_high: high.to_vec(),
    };

    let b = cfg.batch_size;
    for step in 0..cfg.steps {
        let idx: Vec<usize> = (0..b).map(|_| rng.below(data.len())).collect();
        let noise: Vec<f64> =
            (0..b * d_a).map(|_| (rng.normal() * cfg.policy_noise).clamp(-cfg.noise_clip, cfg.noise_clip)).collect();

        let valid: Vec<usize> = idx.iter().copied().filter(|&i| data.has_target[i]).collect();
        if !valid.is_empty() {
            let m = valid.len();
            let next = gather(&data.next_states, d_s, &valid);
            let next_tape = actor_target.forward(&next, m);
            let sel: Vec<usize> = (0..m).flat_map(|r| (0..d_a).map(move |j| r * d_a + j)).collect();
            let next_a: Vec<f64> = next_tape
                .output()
                .iter()
                .zip(&sel)
                .map(|(y, &k)| (y + noise[k]).clamp(-1.0, 1.0))
                .collect();
            let xn = concat(&next, d_s, &next_a, d_a, m);
            let q1 = critic_targets[0].forward(&xn, m);
            let q2 = critic_targets[1].forward(&xn, m);
            let target: Vec<f64> = (0..m)
                .map(|r| {
                    let i = valid[r];
                    let q = q1.output()[r].min(q2.output()[r]);
                    data.rewards[i] + cfg.gamma * (1.0 - data.done[i]) * q
                })
                .collect();
            let x = concat(&gather(&data.states, d_s, &valid), d_s, &gather(&data.actions, d_a, &valid), d_a, m);
            let mut loss = 0.0;
            for (critic, opt) in critics.iter_mut().zip(critic_opts.iter_mut()) {
                let tape = critic.forward(&x, m);
                let d_q: Vec<f64> = tape.output().iter().zip(&target).map(|(q, y)| 2.0 * (q - y) / m as f64).collect();
                loss += tape.output().iter().zip(&target).map(|(q, y)| (q - y).powi(2)).sum::<f64>() / m as f64;
                let mut grads = vec![0.0; critic.num_params()];
                critic.backward(&tape, &d_q, Some(&mut grads));
                if !loss.is_finite() {
                    return Err(AgentError::Diverged { step, loss });
                }
                optimizer_step(&mut critic.params, &grads, opt, cfg.critic_lr)?;
            }
        }

        if step % cfg.policy_delay == 0 {
            let s = gather(&data.states, d_s, &idx);
            let a_data = gather(&data.actions, d_a, &idx);
            let tape = actor.forward(&s, b);
            let pi = tape.output().to_vec();
            let q_tape = critics[0].forward(&concat(&s, d_s, &pi, d_a, b), b);
            let mean_abs_q = q_tape.output().iter().map(|q| q.abs()).sum::<f64>() / b as f64;
            let lambda = cfg.alpha_bc / mean_abs_q.max(1e-8);
            let d_q = vec![-lambda / b as f64; b];
            let d_x = critics[0].backward(&q_tape, &d_q, None);
            let mut d_pi = vec![0.0; b * d_a];
            for r in 0..b {
                for j in 0..d_a {
                    let k = r * d_a + j;
                    d_pi[k] = d_x[r * (d_s + d_a) + d_s + j] + 2.0 * (pi[k] - a_data[k]) / b as f64;
                }
            }
            let mut grads = vec![0.0; actor.num_params()];
            actor.backward(&tape, &d_pi, Some(&mut grads));
            optimizer_step(&mut actor.params, &grads, &mut actor_opt, cfg.actor_lr)?;
            actor_target.soft_update(&actor, cfg.tau);
            for (t, c) in critic_targets.iter_mut().zip(&critics) {
                t.soft_update(c, cfg.tau);
            }
        }

        if log_every > 0 && (step + 1) % log_every == 0 {
            on_log(step + 1, &snapshot(&actor, &critics));
        }
    }
    Ok(snapshot(&actor, &critics))
}
