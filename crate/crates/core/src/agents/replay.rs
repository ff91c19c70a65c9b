//! Minimal uniform replay buffer and one-step DQN update with a hard
//! target network.

use crate::error::{Error, Result};
use crate::math::Matrix;
use crate::net::{adam_step, clip_global_norm, AdamState, Mlp};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    /// True terminal only; time-limit truncations keep bootstrapping.
    pub done: bool,
}

/// FIFO ring of transitions with uniform sampling over the filled slots.
pub struct ReplayBuffer {
    capacity: usize,
    data: Vec<Transition>,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        ReplayBuffer {
            capacity,
            data: Vec::with_capacity(capacity),
            cursor: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.data.len() < self.capacity {
            self.data.push(t);
        } else {
            self.data[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.data[i]
    }

    /// Uniform sample of `count` filled-slot indices (with replacement).
    pub fn sample_indices(&self, count: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        (0..count).map(|_| rng.gen_range(0..self.data.len())).collect()
    }
}

/// One DQN gradient step: regress Q(s,a) toward
/// r + γ·(1−done)·max_a Q_target(s',a) on a uniform sample.
/// Returns Ok(None) when the buffer holds fewer than `batch` transitions
/// (skip-update signal, not an error).
#[allow(clippy::too_many_arguments)]
pub fn replay_dqn_update(
    params: &mut Mlp,
    target: &Mlp,
    opt: &mut AdamState,
    rb: &ReplayBuffer,
    batch: usize,
    gamma: f64,
    lr: f64,
    max_norm: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Option<f64>> {
    if rb.len() < batch {
        return Ok(None);
    }
    let idx = rb.sample_indices(batch, rng);
    let obs_dim = params.obs_dim;
    let mut x = Matrix::zeros(batch, obs_dim);
    let mut x_next = Matrix::zeros(batch, obs_dim);
    for (row, &i) in idx.iter().enumerate() {
        x.row_mut(row).copy_from_slice(&rb.get(i).obs);
        x_next.row_mut(row).copy_from_slice(&rb.get(i).next_obs);
    }
    let q_next = target.forward(&x_next);
    let q = params.forward(&x);
    let mut upstream = Matrix::zeros(batch, params.output_dim);
    let mut loss = 0.0;
    for (row, &i) in idx.iter().enumerate() {
        let t = rb.get(i);
        let boot = if t.done {
            0.0
        } else {
            q_next.row(row).iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        };
        let target_q = t.reward + gamma * boot;
        let err = q.get(row, t.action) - target_q;
        loss += err * err;
        upstream.set(row, t.action, upstream.get(row, t.action) + 2.0 * err / batch as f64);
    }
    loss /= batch as f64;
    if !loss.is_finite() {
        return Err(Error::TrainingDivergence("non-finite DQN loss".into()));
    }
    let mut grad = params.backward(&x, &upstream);
    clip_global_norm(&mut grad, max_norm);
    let mut flat = params.flatten();
    adam_step(&mut flat, opt, &grad, lr)?;
    params.unflatten_from(&flat);
    Ok(Some(loss))
}
