//! Diagonal-Gaussian policy and the clipped-objective PPO update.

use crate::error::{Error, Result};
use crate::math::Matrix;
use crate::net::{adam_step, clip_global_norm, AdamState, Mlp};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::rollout::{GaeResult, RolloutBuffer};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

const LN_2PI: f64 = 1.8378770664093453; // ln(2π)

/// Gaussian policy: a mean network plus a learned state-independent
/// log-std vector, clamped to [LOG_STD_MIN, LOG_STD_MAX].
#[derive(Debug, Clone)]
pub struct GaussianPolicy {
    pub mean: Mlp,
    pub log_std: Vec<f64>,
}

impl GaussianPolicy {
    pub fn new<R: Rng>(obs_dim: usize, hidden: &[usize], act_dim: usize, rng: &mut R) -> Self {
        GaussianPolicy {
            mean: Mlp::init(obs_dim, hidden, act_dim, rng),
            log_std: vec![0.0; act_dim],
        }
    }

    pub fn act_dim(&self) -> usize {
        self.log_std.len()
    }

    pub fn param_count(&self) -> usize {
        self.mean.param_count() + self.log_std.len()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut v = self.mean.flatten();
        v.extend_from_slice(&self.log_std);
        v
    }

    pub fn unflatten_from(&mut self, v: &[f64]) {
        let n = self.mean.param_count();
        self.mean.unflatten_from(&v[..n]);
        for (dst, src) in self.log_std.iter_mut().zip(&v[n..]) {
            *dst = src.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }

    /// Sample actions for a batch of observations; returns the actions and
    /// their log-probabilities under the current policy.
    pub fn sample(&self, obs: &Matrix, rng: &mut ChaCha8Rng) -> (Matrix, Vec<f64>) {
        let mu = self.mean.forward(obs);
        let d = self.act_dim();
        let mut actions = Matrix::zeros(obs.rows, d);
        let mut logps = Vec::with_capacity(obs.rows);
        for i in 0..obs.rows {
            for k in 0..d {
                let std = self.log_std[k].exp();
                let z: f64 = rng.sample(StandardNormal);
                actions.set(i, k, mu.get(i, k) + std * z);
            }
            logps.push(self.log_prob_row(mu.row(i), actions.row(i)));
        }
        (actions, logps)
    }

    /// log N(action; μ, diag(σ²)) summed over action dims.
    pub fn log_prob_row(&self, mu: &[f64], action: &[f64]) -> f64 {
        let mut lp = 0.0;
        for k in 0..mu.len() {
            let ls = self.log_std[k];
            let inv_var = (-2.0 * ls).exp();
            let d = action[k] - mu[k];
            lp += -0.5 * d * d * inv_var - ls - 0.5 * LN_2PI;
        }
        lp
    }

    /// Differential entropy of the Gaussian, summed over action dims.
    pub fn entropy(&self) -> f64 {
        self.log_std
            .iter()
            .map(|ls| ls + 0.5 * (LN_2PI + 1.0))
            .sum()
    }
}

pub struct PpoUpdateCfg {
    pub clip: f64,
    pub vf_coef: f64,
    pub ent_coef: f64,
    pub n_mb: usize,
    pub n_epochs: usize,
    pub lr: f64,
    pub max_norm: f64,
}

pub struct PpoStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    /// Mean probability ratio over the first minibatch of the first epoch;
    /// equals 1 when the cached log-probs are consistent.
    pub first_minibatch_ratio: f64,
}

/// Clipped-surrogate PPO update with clipped value loss. Policy and value
/// networks are updated by separate Adam states; the value term keeps the
/// `c₁` coefficient so the joint objective is preserved.
#[allow(clippy::too_many_arguments)]
pub fn ppo_update(
    policy: &mut GaussianPolicy,
    value: &mut Mlp,
    opt_policy: &mut AdamState,
    opt_value: &mut AdamState,
    buf: &RolloutBuffer,
    adv: &GaeResult,
    cfg: &PpoUpdateCfg,
    rng: &mut ChaCha8Rng,
) -> Result<PpoStats> {
    use rand::seq::SliceRandom;
    let n = buf.batch_size();
    let (l, e) = (buf.l, buf.e);
    let flat_obs = buf.flat_obs();
    let act_dim = policy.act_dim();
    let mut flat_actions = Matrix::zeros(n, act_dim);
    let mut old_logp = vec![0.0; n];
    let mut advantages = vec![0.0; n];
    let mut returns = vec![0.0; n];
    let mut old_values = vec![0.0; n];
    for t in 0..l {
        for i in 0..e {
            let k = t * e + i;
            flat_actions
                .row_mut(k)
                .copy_from_slice(buf.cont_actions[t].row(i));
            old_logp[k] = buf.logprob[t][i];
            advantages[k] = adv.advantages[t][i];
            returns[k] = adv.value_targets[t][i];
            old_values[k] = buf.values[t][i];
        }
    }

    let mut indices: Vec<usize> = (0..n).collect();
    let mut stats = PpoStats {
        policy_loss: 0.0,
        value_loss: 0.0,
        entropy: policy.entropy(),
        first_minibatch_ratio: 0.0,
    };
    let mut batches = 0usize;

    for epoch in 0..cfg.n_epochs {
        indices.shuffle(rng);
        // near-equal chunks; rollout lengths are not always divisible
        for mb in 0..cfg.n_mb {
            let lo = mb * n / cfg.n_mb;
            let hi = (mb + 1) * n / cfg.n_mb;
            if lo == hi {
                continue;
            }
            let idx = &indices[lo..hi];
            let mbs = idx.len();
            let x = flat_obs.gather_rows(idx);
            let mu = policy.mean.forward(&x);

            let mut upstream_mu = Matrix::zeros(mbs, act_dim);
            let mut g_log_std = vec![0.0; act_dim];
            let mut pg_loss = 0.0;
            let mut ratio_sum = 0.0;
            for (row, &k) in idx.iter().enumerate() {
                let a = flat_actions.row(k);
                let logp = policy.log_prob_row(mu.row(row), a);
                let ratio = (logp - old_logp[k]).exp();
                ratio_sum += ratio;
                let adv_k = advantages[k];
                let unclipped = ratio * adv_k;
                let clipped = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip) * adv_k;
                pg_loss -= unclipped.min(clipped);
                // gradient flows only through the unclipped branch when it
                // is the active minimum
                if unclipped <= clipped {
                    let dlogp = -ratio * adv_k / mbs as f64;
                    for kk in 0..act_dim {
                        let ls = policy.log_std[kk];
                        let inv_var = (-2.0 * ls).exp();
                        let d = a[kk] - mu.get(row, kk);
                        upstream_mu.set(row, kk, dlogp * d * inv_var);
                        g_log_std[kk] += dlogp * (d * d * inv_var - 1.0);
                    }
                }
            }
            pg_loss /= mbs as f64;
            if !pg_loss.is_finite() {
                return Err(Error::TrainingDivergence(format!(
                    "non-finite PPO policy loss at epoch {epoch}"
                )));
            }
            // entropy bonus is state-independent for a diagonal Gaussian
            for g in g_log_std.iter_mut() {
                *g -= cfg.ent_coef;
            }
            if epoch == 0 && mb == 0 {
                stats.first_minibatch_ratio = ratio_sum / mbs as f64;
            }

            let mut grad = policy.mean.backward(&x, &upstream_mu);
            grad.extend_from_slice(&g_log_std);
            clip_global_norm(&mut grad, cfg.max_norm);
            let mut flat = policy.flatten();
            adam_step(&mut flat, opt_policy, &grad, cfg.lr)?;
            policy.unflatten_from(&flat);

            // clipped value loss
            let v = value.forward(&x);
            let mut upstream_v = Matrix::zeros(mbs, 1);
            let mut v_loss = 0.0;
            for (row, &k) in idx.iter().enumerate() {
                let vk = v.get(row, 0);
                let clipped_v = old_values[k] + (vk - old_values[k]).clamp(-cfg.clip, cfg.clip);
                let e_raw = vk - returns[k];
                let e_clip = clipped_v - returns[k];
                if e_raw * e_raw >= e_clip * e_clip {
                    v_loss += 0.5 * e_raw * e_raw;
                    upstream_v.set(row, 0, cfg.vf_coef * e_raw / mbs as f64);
                } else {
                    v_loss += 0.5 * e_clip * e_clip;
                    let inside = (vk - old_values[k]).abs() < cfg.clip;
                    if inside {
                        upstream_v.set(row, 0, cfg.vf_coef * e_clip / mbs as f64);
                    }
                }
            }
            v_loss /= mbs as f64;
            if !v_loss.is_finite() {
                return Err(Error::TrainingDivergence(format!(
                    "non-finite PPO value loss at epoch {epoch}"
                )));
            }
            let mut vgrad = value.backward(&x, &upstream_v);
            clip_global_norm(&mut vgrad, cfg.max_norm);
            let mut vflat = value.flatten();
            adam_step(&mut vflat, opt_value, &vgrad, cfg.lr)?;
            value.unflatten_from(&vflat);

            stats.policy_loss += pg_loss;
            stats.value_loss += v_loss;
            batches += 1;
        }
    }
    stats.policy_loss /= batches as f64;
    stats.value_loss /= batches as f64;
    Ok(stats)
}
