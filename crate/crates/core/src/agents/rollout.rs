//! Rollout storage, Q(λ) return computation, and GAE.

use crate::env::{Action, EnvBatch};
use crate::error::Result;
use crate::math::{argmax, mean, std_dev, Matrix};
use crate::net::Mlp;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::ppo::GaussianPolicy;

/// E×L transitions plus the bootstrap observation, with network outputs
/// cached at collection time. The effective batch for the next update is
/// E·L flattened transitions.
pub struct RolloutBuffer {
    pub l: usize,
    pub e: usize,
    /// L+1 matrices of E×obs_dim; the last row block is the bootstrap obs.
    pub obs: Vec<Matrix>,
    /// Discrete actions, L×E (Q-learners).
    pub actions: Vec<Vec<usize>>,
    /// Continuous actions, L matrices of E×act_dim (PPO).
    pub cont_actions: Vec<Matrix>,
    pub rewards: Vec<Vec<f64>>,
    pub done: Vec<Vec<bool>>,
    pub truncated: Vec<Vec<bool>>,
    /// Q(s_t, ·) cached at collection, L+1 matrices of E×n_actions.
    pub q_all: Vec<Matrix>,
    /// Bootstrap value of the pre-reset final state for truncated steps,
    /// L×E (zero where not truncated).
    pub trunc_bootstrap: Vec<Vec<f64>>,
    /// V(s_t) cached at collection, (L+1)×E (PPO).
    pub values: Vec<Vec<f64>>,
    /// log π(a_t|s_t) at collection time, L×E (PPO).
    pub logprob: Vec<Vec<f64>>,
    /// Regression targets, L×E, filled by the return computation.
    pub targets: Vec<Vec<f64>>,
}

impl RolloutBuffer {
    fn empty(l: usize, e: usize) -> Self {
        RolloutBuffer {
            l,
            e,
            obs: Vec::with_capacity(l + 1),
            actions: Vec::with_capacity(l),
            cont_actions: Vec::with_capacity(l),
            rewards: Vec::with_capacity(l),
            done: Vec::with_capacity(l),
            truncated: Vec::with_capacity(l),
            q_all: Vec::with_capacity(l + 1),
            trunc_bootstrap: Vec::with_capacity(l),
            values: Vec::with_capacity(l + 1),
            logprob: Vec::with_capacity(l),
            targets: Vec::new(),
        }
    }

    /// Number of flattened transitions E·L.
    pub fn batch_size(&self) -> usize {
        self.l * self.e
    }

    /// All L·E step observations as one (L·E)×obs_dim matrix, step-major.
    pub fn flat_obs(&self) -> Matrix {
        let obs_dim = self.obs[0].cols;
        let mut m = Matrix::zeros(self.l * self.e, obs_dim);
        for t in 0..self.l {
            for i in 0..self.e {
                m.row_mut(t * self.e + i).copy_from_slice(self.obs[t].row(i));
            }
        }
        m
    }
}

/// Collect L lockstep steps with ε-greedy actions over Q-values.
pub fn collect_q_rollout(
    params: &Mlp,
    env: &mut EnvBatch,
    l: usize,
    epsilon: f64,
    rng: &mut ChaCha8Rng,
) -> Result<RolloutBuffer> {
    assert!(l >= 1);
    let e = env.num_envs();
    let n_actions = params.output_dim;
    let mut buf = RolloutBuffer::empty(l, e);
    let mut obs = env.observe();
    for _ in 0..l {
        let q = params.forward(&obs);
        let mut actions = Vec::with_capacity(e);
        let mut action_ids = Vec::with_capacity(e);
        for i in 0..e {
            let a = if rng.gen::<f64>() < epsilon {
                rng.gen_range(0..n_actions)
            } else {
                argmax(q.row(i))
            };
            action_ids.push(a);
            actions.push(Action::Discrete(a));
        }
        let step = env.step_all(&actions)?;
        let mut trunc_boot = vec![0.0; e];
        let truncated_rows: Vec<usize> =
            (0..e).filter(|&i| step.truncated[i]).collect();
        if !truncated_rows.is_empty() {
            let finals = step.final_obs.gather_rows(&truncated_rows);
            let qf = params.forward(&finals);
            for (k, &i) in truncated_rows.iter().enumerate() {
                trunc_boot[i] = qf.row(k).iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            }
        }
        buf.obs.push(obs);
        buf.q_all.push(q);
        buf.actions.push(action_ids);
        buf.rewards.push(step.reward);
        buf.done.push(step.done);
        buf.truncated.push(step.truncated);
        buf.trunc_bootstrap.push(trunc_boot);
        obs = step.obs;
    }
    buf.q_all.push(params.forward(&obs));
    buf.obs.push(obs);
    Ok(buf)
}

/// Collect L lockstep steps sampling from a Gaussian policy, caching
/// values and log-probabilities.
pub fn collect_gaussian_rollout(
    policy: &GaussianPolicy,
    value: &Mlp,
    env: &mut EnvBatch,
    l: usize,
    rng: &mut ChaCha8Rng,
) -> Result<RolloutBuffer> {
    assert!(l >= 1);
    let e = env.num_envs();
    let mut buf = RolloutBuffer::empty(l, e);
    let mut obs = env.observe();
    for _ in 0..l {
        let (actions, logps) = policy.sample(&obs, rng);
        let v = value.forward(&obs);
        let acts: Vec<Action> = (0..e)
            .map(|i| Action::Continuous(actions.row(i).to_vec()))
            .collect();
        let step = env.step_all(&acts)?;
        let mut trunc_boot = vec![0.0; e];
        let truncated_rows: Vec<usize> =
            (0..e).filter(|&i| step.truncated[i]).collect();
        if !truncated_rows.is_empty() {
            let finals = step.final_obs.gather_rows(&truncated_rows);
            let vf = value.forward(&finals);
            for (k, &i) in truncated_rows.iter().enumerate() {
                trunc_boot[i] = vf.get(k, 0);
            }
        }
        buf.obs.push(obs);
        buf.values.push((0..e).map(|i| v.get(i, 0)).collect());
        buf.cont_actions.push(actions);
        buf.logprob.push(logps);
        buf.rewards.push(step.reward);
        buf.done.push(step.done);
        buf.truncated.push(step.truncated);
        buf.trunc_bootstrap.push(trunc_boot);
        obs = step.obs;
    }
    let v = value.forward(&obs);
    buf.values.push((0..e).map(|i| v.get(i, 0)).collect());
    buf.obs.push(obs);
    Ok(buf)
}

/// Backward Q(λ) recursion:
/// R_t = r_t + γ·[(1−λ)·max_a Q(s_{t+1},a) + λ·R_{t+1}].
/// Terminal steps stop the recursion at r_t; truncated steps bootstrap
/// with the greedy Q of the pre-reset state.
pub fn q_lambda_returns(buf: &mut RolloutBuffer, gamma: f64, lambda: f64) {
    let (l, e) = (buf.l, buf.e);
    let mut targets = vec![vec![0.0; e]; l];
    for i in 0..e {
        let mut r_next = max_row(&buf.q_all[l], i);
        for t in (0..l).rev() {
            let r = buf.rewards[t][i];
            let target = if buf.done[t][i] && !buf.truncated[t][i] {
                r
            } else if buf.truncated[t][i] {
                r + gamma * buf.trunc_bootstrap[t][i]
            } else {
                let next_max = max_row(&buf.q_all[t + 1], i);
                r + gamma * ((1.0 - lambda) * next_max + lambda * r_next)
            };
            targets[t][i] = target;
            r_next = target;
        }
    }
    buf.targets = targets;
}

fn max_row(m: &Matrix, i: usize) -> f64 {
    m.row(i).iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

pub struct GaeResult {
    /// Per-batch normalized advantages (mean 0, std 1), L×E.
    pub advantages: Vec<Vec<f64>>,
    /// Advantages before normalization, L×E.
    pub raw_advantages: Vec<Vec<f64>>,
    /// A_raw + V(s_t), the value regression targets, L×E.
    pub value_targets: Vec<Vec<f64>>,
}

/// Generalized advantage estimation over the rollout, with per-batch
/// advantage normalization.
pub fn gae(buf: &RolloutBuffer, gamma: f64, lambda: f64) -> GaeResult {
    let (l, e) = (buf.l, buf.e);
    let mut raw = vec![vec![0.0; e]; l];
    let mut targets = vec![vec![0.0; e]; l];
    for i in 0..e {
        let mut a_next = 0.0;
        for t in (0..l).rev() {
            let v = buf.values[t][i];
            let r = buf.rewards[t][i];
            let (delta, carry) = if buf.done[t][i] && !buf.truncated[t][i] {
                (r - v, 0.0)
            } else if buf.truncated[t][i] {
                (r + gamma * buf.trunc_bootstrap[t][i] - v, 0.0)
            } else {
                (r + gamma * buf.values[t + 1][i] - v, 1.0)
            };
            let a = delta + gamma * lambda * carry * a_next;
            raw[t][i] = a;
            targets[t][i] = a + v;
            a_next = a;
        }
    }
    let flat: Vec<f64> = raw.iter().flatten().copied().collect();
    let m = mean(&flat);
    let s = std_dev(&flat);
    let advantages = raw
        .iter()
        .map(|row| row.iter().map(|a| (a - m) / (s + 1e-8)).collect())
        .collect();
    GaeResult {
        advantages,
        raw_advantages: raw,
        value_targets: targets,
    }
}
