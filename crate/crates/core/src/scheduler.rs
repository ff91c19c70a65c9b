//! Divergence-driven batch scaling.
//!
//! The scheduler measures how much the greedy policy moved since the last
//! snapshot (behavioral divergence; Gaussian KL for continuous policies),
//! smooths it over a sliding window, maps it through a log interpolation
//! onto a rollout-length (or replay-batch) range, and EMA-blends the
//! result. A gradient-noise-scale estimator provides the alternative
//! batch-size signal.

use crate::agents::{GaussianPolicy, ReplayBuffer};
use crate::math::{argmax, mean, Matrix};
use crate::net::Mlp;
use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use std::collections::VecDeque;

/// Fraction of reference states whose greedy action differs between the
/// two parameter sets. Argmax ties break toward the lowest action index
/// in both evaluations.
pub fn behavioral_divergence(params_new: &Mlp, params_old: &Mlp, ref_obs: &Matrix) -> f64 {
    assert!(ref_obs.rows >= 1, "reference batch must be nonempty");
    let q_new = params_new.forward(ref_obs);
    let q_old = params_old.forward(ref_obs);
    let mut flips = 0usize;
    for i in 0..ref_obs.rows {
        if argmax(q_new.row(i)) != argmax(q_old.row(i)) {
            flips += 1;
        }
    }
    flips as f64 / ref_obs.rows as f64
}

/// Normalized log interpolation factor:
/// α = log(clip(δ, δ_min, δ_max)/δ_min) / log(δ_max/δ_min) ∈ [0, 1].
pub fn interp_factor(delta: f64, delta_min: f64, delta_max: f64) -> f64 {
    assert!(0.0 < delta_min && delta_min < delta_max);
    let clipped = delta.clamp(delta_min, delta_max);
    (clipped / delta_min).ln() / (delta_max / delta_min).ln()
}

/// L = L_max − α·(L_max − L_min): α = 1 (rapid change) pins the minimum,
/// α = 0 (stable policy) the maximum.
pub fn target_length(alpha: f64, l_min: usize, l_max: usize) -> f64 {
    debug_assert!((0.0..=1.0).contains(&alpha));
    l_max as f64 - alpha * (l_max - l_min) as f64
}

/// Convex blend of the previous length toward the target.
pub fn ema_rollout(l_prev: f64, l_target: f64, beta_ema: f64) -> f64 {
    debug_assert!(beta_ema > 0.0 && beta_ema <= 1.0);
    (1.0 - beta_ema) * l_prev + beta_ema * l_target
}

/// Update epochs scaled with the rollout length to keep gradient updates
/// per transition constant: max(1, round(N_base · L_adapt / L_base)).
pub fn compensated_epochs(n_base: usize, l_adapt: usize, l_base: usize) -> usize {
    assert!(n_base > 0 && l_adapt > 0 && l_base > 0);
    ((n_base * l_adapt) as f64 / l_base as f64).round().max(1.0) as usize
}

/// Mean closed-form KL(new ‖ old) between diagonal Gaussians over the
/// reference states, summed over action dimensions.
pub fn kl_gaussian_divergence(
    policy_new: &GaussianPolicy,
    policy_old: &GaussianPolicy,
    ref_obs: &Matrix,
) -> f64 {
    assert!(ref_obs.rows >= 1);
    let mu1 = policy_new.mean.forward(ref_obs);
    let mu2 = policy_old.mean.forward(ref_obs);
    let d = policy_new.act_dim();
    let mut total = 0.0;
    for i in 0..ref_obs.rows {
        for k in 0..d {
            let ls1 = policy_new.log_std[k];
            let ls2 = policy_old.log_std[k];
            let var1 = (2.0 * ls1).exp();
            let var2 = (2.0 * ls2).exp();
            let dm = mu1.get(i, k) - mu2.get(i, k);
            total += ls2 - ls1 + (var1 + dm * dm) / (2.0 * var2) - 0.5;
        }
    }
    total / ref_obs.rows as f64
}

/// Scheduler state shared by the rollout, KL and replay-batch variants;
/// `S` is the policy snapshot type the divergence is measured against.
pub struct AbsState<S> {
    pub l_min: usize,
    pub l_max: usize,
    pub delta_min: f64,
    pub delta_max: f64,
    /// Adapt frequency K, in training iterations.
    pub adapt_every: usize,
    /// Sliding window size W.
    pub window_size: usize,
    pub beta_ema: f64,
    /// Reference batch size M.
    pub ref_batch: usize,
    window: VecDeque<f64>,
    /// Real-valued length; rounded and clamped only at consumption.
    pub l_curr: f64,
    snapshot: S,
    iter_count: usize,
}

/// What one scheduler tick decided.
#[derive(Debug, Clone, PartialEq)]
pub struct TickDecision {
    pub length: usize,
    /// Raw divergence, present only on measurement iterations.
    pub raw: Option<f64>,
    /// Window mean, present whenever at least one measurement exists and
    /// this iteration measured.
    pub smoothed: Option<f64>,
}

#[allow(clippy::too_many_arguments)]
impl<S: Clone> AbsState<S> {
    pub fn new(
        l_min: usize,
        l_max: usize,
        delta_min: f64,
        delta_max: f64,
        adapt_every: usize,
        window_size: usize,
        beta_ema: f64,
        ref_batch: usize,
        snapshot: S,
    ) -> Self {
        assert!(l_min >= 1 && l_min <= l_max);
        assert!(0.0 < delta_min && delta_min < delta_max && delta_max < 1.0 || delta_max <= 1.0);
        assert!(adapt_every >= 1 && window_size >= 1);
        assert!(beta_ema > 0.0 && beta_ema <= 1.0);
        AbsState {
            l_min,
            l_max,
            delta_min,
            delta_max,
            adapt_every,
            window_size,
            beta_ema,
            ref_batch,
            window: VecDeque::with_capacity(window_size),
            l_curr: l_min as f64,
            snapshot,
            iter_count: 0,
        }
    }

    /// Window mean, or None during the burn-in before any measurement
    /// (callers must keep the length at `l_min` in that case).
    pub fn smoothed_divergence(&self) -> Option<f64> {
        if self.window.is_empty() {
            None
        } else {
            let v: Vec<f64> = self.window.iter().copied().collect();
            Some(mean(&v))
        }
    }

    pub fn window_len(&self) -> usize {
        self.window.len()
    }

    pub fn iterations(&self) -> usize {
        self.iter_count
    }

    pub fn snapshot(&self) -> &S {
        &self.snapshot
    }

    /// Consume the real-valued length: round, then clamp to the range.
    pub fn current_length(&self) -> usize {
        (self.l_curr.round() as i64).clamp(self.l_min as i64, self.l_max as i64) as usize
    }

    /// Advance one training iteration. Every K-th call, `measure` compares
    /// the live policy against the stored snapshot (measured first, then
    /// the snapshot is refreshed), the divergence enters the window, and —
    /// once W samples exist — the smoothed value drives the schedule.
    /// Before that the length stays pinned at `l_min`.
    fn tick(&mut self, live: &S, measure: impl FnOnce(&S) -> f64) -> TickDecision {
        self.iter_count += 1;
        let mut raw = None;
        let mut smoothed = None;
        if self.iter_count % self.adapt_every == 0 {
            let delta = measure(&self.snapshot);
            raw = Some(delta);
            if self.window.len() == self.window_size {
                self.window.pop_front();
            }
            self.window.push_back(delta);
            smoothed = self.smoothed_divergence();
            if self.window.len() >= self.window_size {
                let alpha = interp_factor(smoothed.unwrap(), self.delta_min, self.delta_max);
                let target = target_length(alpha, self.l_min, self.l_max);
                self.l_curr = ema_rollout(self.l_curr, target, self.beta_ema);
            } else {
                self.l_curr = self.l_min as f64;
            }
            self.snapshot = live.clone();
        }
        TickDecision {
            length: self.current_length(),
            raw,
            smoothed,
        }
    }
}

/// One ABS iteration for a Q-policy: returns the next rollout length and
/// the compensated epoch count.
pub fn abs_tick(
    state: &mut AbsState<Mlp>,
    params: &Mlp,
    rollout_obs: &Matrix,
    n_epochs_base: usize,
    l_base: usize,
    rng: &mut ChaCha8Rng,
) -> (TickDecision, usize) {
    let m = state.ref_batch;
    let decision = state.tick(params, |snapshot| {
        let refs = sample_reference(rollout_obs, m, rng);
        behavioral_divergence(params, snapshot, &refs)
    });
    let epochs = compensated_epochs(n_epochs_base, decision.length, l_base);
    (decision, epochs)
}

/// One adaptive-rollout iteration for a Gaussian policy, using the KL
/// divergence against the snapshot as the stability metric.
pub fn ars_tick(
    state: &mut AbsState<GaussianPolicy>,
    policy: &GaussianPolicy,
    rollout_obs: &Matrix,
    rng: &mut ChaCha8Rng,
) -> TickDecision {
    let m = state.ref_batch;
    state.tick(policy, |snapshot| {
        let refs = sample_reference(rollout_obs, m, rng);
        kl_gaussian_divergence(policy, snapshot, &refs)
    })
}

/// The replay-buffer variant: the rollout range becomes a batch-size
/// range and reference states come from the buffer; everything else is
/// the same pipeline.
pub fn adapt_replay_batch(
    state: &mut AbsState<Mlp>,
    params: &Mlp,
    rb: &ReplayBuffer,
    rng: &mut ChaCha8Rng,
) -> TickDecision {
    let m = state.ref_batch.min(rb.len()).max(1);
    let obs_dim = params.obs_dim;
    state.tick(params, |snapshot| {
        let idx = sample(rng, rb.len(), m.min(rb.len()));
        let mut refs = Matrix::zeros(idx.len(), obs_dim);
        for (row, i) in idx.into_iter().enumerate() {
            refs.row_mut(row).copy_from_slice(&rb.get(i).obs);
        }
        behavioral_divergence(params, snapshot, &refs)
    })
}

/// Sample min(M, rows) reference rows uniformly without replacement.
fn sample_reference(rollout_obs: &Matrix, m: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let take = m.min(rollout_obs.rows);
    let idx: Vec<usize> = sample(rng, rollout_obs.rows, take).into_iter().collect();
    rollout_obs.gather_rows(&idx)
}

/// Micro-batch gradient noise estimate.
#[derive(Debug, Clone)]
pub struct GnsEstimate {
    /// N = b · 1/(m−1) · Σ ‖g_i − ḡ‖².
    pub noise: f64,
    /// S = ‖ḡ‖² − N/B.
    pub signal: f64,
    /// N/S; undefined (degenerate) when S ≤ 0.
    pub b_simple: Option<f64>,
    pub micro_count: usize,
    pub micro_size: usize,
    pub batch: usize,
}

impl GnsEstimate {
    pub fn is_degenerate(&self) -> bool {
        self.b_simple.is_none()
    }
}

/// Variance-based gradient noise scale from m micro-batch gradients of
/// size b each (B = m·b).
pub fn gns_estimate(micro_grads: &[Vec<f64>], micro_size: usize, batch: usize) -> GnsEstimate {
    let m = micro_grads.len();
    assert!(m >= 2, "need at least two micro-batches");
    assert_eq!(batch, m * micro_size, "B must equal m·b");
    let dim = micro_grads[0].len();
    let mut g_bar = vec![0.0; dim];
    for g in micro_grads {
        assert_eq!(g.len(), dim);
        for (acc, v) in g_bar.iter_mut().zip(g) {
            *acc += v;
        }
    }
    for v in g_bar.iter_mut() {
        *v /= m as f64;
    }
    let spread: f64 = micro_grads
        .iter()
        .map(|g| g.iter().zip(&g_bar).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum();
    let noise = micro_size as f64 * spread / (m - 1) as f64;
    let signal = g_bar.iter().map(|v| v * v).sum::<f64>() - noise / batch as f64;
    let b_simple = if signal > 0.0 { Some(noise / signal) } else { None };
    GnsEstimate {
        noise,
        signal,
        b_simple,
        micro_count: m,
        micro_size,
        batch,
    }
}

/// B_new = clip(⌊B_simple⌋, B_min, B_max); a degenerate estimate keeps the
/// previous batch size.
pub fn gns_target_batch(est: &GnsEstimate, b_min: usize, b_max: usize, prev: usize) -> usize {
    match est.b_simple {
        Some(b) => (b.floor() as i64).clamp(b_min as i64, b_max as i64) as usize,
        None => prev,
    }
}

#[cfg(test)]
mod tests;
