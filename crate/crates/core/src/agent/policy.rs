use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mlp::Mlp;
use super::{AgentError, Result};
use crate::data::rollout_return;
use crate::data::{expert_action, EnvSpec};
use crate::rng::SplitMix64;
use crate::seqcore::{read_weights, write_weights};

/// Maps a raw state to an action.
pub trait Controller {
    fn act(&self, state: &[f64]) -> Vec<f64>;
}

/// The hand-written reference controller.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExpertController;

impl Controller for ExpertController {
    fn act(&self, state: &[f64]) -> Vec<f64> {
        expert_action(state)
    }
}

/// A trained deterministic actor with its twin critics.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub actor: Mlp,
    pub critics: [Mlp; 2],
    pub state_mean: Vec<f64>,
    pub state_std: Vec<f64>,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
}

impl Policy {
    pub fn normalize(&self, state: &[f64], out: &mut Vec<f64>) {
        out.extend(state.iter().zip(self.state_mean.iter().zip(&self.state_std)).map(|(x, (m, s))| (x - m) / s));
    }

    /// Maps tanh outputs in `[-1, 1]` onto the action box.
    pub fn scale_actions(&self, raw: &[f64]) -> Vec<f64> {
        let d_a = self.action_low.len();
        raw.iter()
            .enumerate()
            .map(|(i, y)| {
                let (lo, hi) = (self.action_low[i % d_a], self.action_high[i % d_a]);
                (lo + 0.5 * (y + 1.0) * (hi - lo)).clamp(lo, hi)
            })
            .collect()
    }
}

impl Controller for Policy {
    fn act(&self, state: &[f64]) -> Vec<f64> {
        let mut x = Vec::with_capacity(state.len());
        self.normalize(state, &mut x);
        let tape = self.actor.forward(&x, 1);
        self.scale_actions(tape.output())
    }
}

/// Mean undiscounted return over `episodes` full episodes; episode `i`
/// starts from stream `(seed, i)`.
pub fn evaluate_policy(env: &EnvSpec, policy: &dyn Controller, episodes: usize, seed: u64) -> Result<f64> {
    if episodes == 0 {
        return Err(AgentError::Config("episodes must be at least 1".into()));
    }
    let total: f64 = (0..episodes as u64)
        .map(|ep| {
            let mut rng = SplitMix64::stream(seed, ep);
            rollout_return(env, &mut rng, |s, _| policy.act(s))
        })
        .sum();
    Ok(total / episodes as f64)
}

/// `100 * (J - J_random) / (J_expert - J_random)`.
pub fn normalized_score(j: f64, env: &EnvSpec) -> Result<f64> {
    let span = env.j_expert - env.j_random;
    if !(span.abs() > 1e-12) || !span.is_finite() {
        return Err(AgentError::DegenerateReference { j_random: env.j_random, j_expert: env.j_expert });
    }
    Ok(100.0 * (j - env.j_random) / span)
}

const POLICY_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct PolicyManifest {
    format_version: u32,
    actor: Mlp,
    critic: Mlp,
    num_actor_params: usize,
    num_critic_params: usize,
    state_mean: Vec<f64>,
    state_std: Vec<f64>,
    action_low: Vec<f64>,
    action_high: Vec<f64>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> AgentError + '_ {
    move |source| AgentError::Io { path: path.display().to_string(), source }
}

/// Writes `policy.json`, `actor.bin`, `critic_0.bin` and `critic_1.bin`.
pub fn save_policy(policy: &Policy, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let manifest = PolicyManifest {
        format_version: POLICY_VERSION,
        actor: policy.actor.clone(),
        critic: policy.critics[0].clone(),
        num_actor_params: policy.actor.num_params(),
        num_critic_params: policy.critics[0].num_params(),
        state_mean: policy.state_mean.clone(),
        state_std: policy.state_std.clone(),
        action_low: policy.action_low.clone(),
        action_high: policy.action_high.clone(),
    };
    let path = dir.join("policy.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| AgentError::Checkpoint(e.to_string()))?;
    fs::write(&path, text).map_err(io_err(&path))?;
    write_weights(&policy.actor.params, &dir.join("actor.bin"))?;
    for (i, c) in policy.critics.iter().enumerate() {
        write_weights(&c.params, &dir.join(format!("critic_{i}.bin")))?;
    }
    Ok(())
}

pub fn load_policy(dir: &Path) -> Result<Policy> {
    let path = dir.join("policy.json");
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let m: PolicyManifest = serde_json::from_str(&text).map_err(|e| AgentError::Checkpoint(e.to_string()))?;
    if m.format_version != POLICY_VERSION {
        return Err(AgentError::Checkpoint(format!("unsupported format version {}", m.format_version)));
    }
    if m.actor.num_params() != m.num_actor_params || m.critic.num_params() != m.num_critic_params {
        return Err(AgentError::Checkpoint("parameter counts do not match the layer sizes".into()));
    }
    let mut actor = m.actor;
    actor.params = read_weights(&dir.join("actor.bin"), m.num_actor_params)?;
    let load_critic = |i: usize| -> Result<Mlp> {
        let mut c = m.critic.clone();
        c.params = read_weights(&dir.join(format!("critic_{i}.bin")), m.num_critic_params)?;
        Ok(c)
    };
    let critics = [load_critic(0)?, load_critic(1)?];
    Ok(Policy {
        actor,
        critics,
        state_mean: m.state_mean,
        state_std: m.state_std,
        action_low: m.action_low,
        action_high: m.action_high,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::Activation;

    fn tiny_policy() -> Policy {
        let mut rng = SplitMix64::new(3);
        Policy {
            actor: Mlp::new(vec![2, 4, 1], Activation::Tanh, &mut rng),
            critics: [
                Mlp::new(vec![3, 4, 1], Activation::Identity, &mut rng),
                Mlp::new(vec![3, 4, 1], Activation::Identity, &mut rng),
            ],
            state_mean: vec![0.1, 0.0],
            state_std: vec![0.5, 0.2],
            action_low: vec![-1.0],
            action_high: vec![1.0],
        }
    }

    #[test]
    fn normalized_score_values() {
        let env = EnvSpec::line_reach();
        assert!(normalized_score(env.j_random, &env).unwrap().abs() < 1e-12);
        assert!((normalized_score(env.j_expert, &env).unwrap() - 100.0).abs() < 1e-12);
        let mid = 0.5 * (env.j_random + env.j_expert);
        assert!((normalized_score(mid, &env).unwrap() - 50.0).abs() < 1e-12);
        let mut flat = env.clone();
        flat.j_expert = flat.j_random;
        assert!(matches!(normalized_score(0.0, &flat), Err(AgentError::DegenerateReference { .. })));
    }

    #[test]
    fn expert_controller_matches_reference() {
        for env in [EnvSpec::line_reach(), EnvSpec::sparse_reach()] {
            let j = evaluate_policy(&env, &ExpertController, 100, 11).unwrap();
            assert!((j - env.j_expert).abs() <= 0.1 * env.j_expert.abs(), "{} {j}", env.env_id);
        }
    }

    #[test]
    fn single_episode_and_replay() {
        let env = EnvSpec::line_reach();
        let p = tiny_policy();
        let one = evaluate_policy(&env, &p, 1, 4).unwrap();
        let mut rng = SplitMix64::stream(4, 0);
        let direct = rollout_return(&env, &mut rng, |s, _| p.act(s));
        assert_eq!(one, direct);
        assert_eq!(evaluate_policy(&env, &p, 7, 4).unwrap(), evaluate_policy(&env, &p, 7, 4).unwrap());
        assert!(evaluate_policy(&env, &p, 0, 4).is_err());
    }

    #[test]
    fn actions_stay_in_bounds() {
        let p = tiny_policy();
        for x in [-1e6, -3.0, 0.0, 3.0, 1e6] {
            let a = p.act(&[x, -x]);
            assert!(a[0] >= -1.0 && a[0] <= 1.0);
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = tiny_policy();
        save_policy(&p, dir.path()).unwrap();
        assert_eq!(load_policy(dir.path()).unwrap(), p);
        fs::write(dir.path().join("actor.bin"), [0u8; 5]).unwrap();
        assert!(load_policy(dir.path()).is_err());
    }
}
