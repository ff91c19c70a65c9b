//! Minibatch Q-regression update for the simplified PQN.

use crate::error::{Error, Result};
use crate::math::Matrix;
use crate::net::{adam_step, clip_global_norm, AdamState, Mlp};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use super::rollout::RolloutBuffer;

/// Regress Q(s,a) toward the precomputed targets for `n_epochs` epochs of
/// `n_mb` shuffled minibatches. Targets are never recomputed between
/// epochs. When `capture_micro_grads` is set, the raw (pre-clip) gradient
/// of every first-epoch minibatch is returned for noise-scale estimation.
pub fn pqn_update(
    params: &mut Mlp,
    opt: &mut AdamState,
    buf: &RolloutBuffer,
    n_mb: usize,
    n_epochs: usize,
    lr: f64,
    max_norm: f64,
    rng: &mut ChaCha8Rng,
    capture_micro_grads: bool,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let n = buf.batch_size();
    if n % n_mb != 0 {
        return Err(Error::Contract(format!(
            "batch size {n} not divisible by {n_mb} minibatches"
        )));
    }
    assert!(!buf.targets.is_empty(), "targets must be computed first");
    let flat_obs = buf.flat_obs();
    let flat_actions: Vec<usize> = (0..n)
        .map(|k| buf.actions[k / buf.e][k % buf.e])
        .collect();
    let flat_targets: Vec<f64> = (0..n)
        .map(|k| buf.targets[k / buf.e][k % buf.e])
        .collect();

    let mb_size = n / n_mb;
    let mut indices: Vec<usize> = (0..n).collect();
    let mut micro_grads = Vec::new();
    let mut loss_sum = 0.0;
    let mut loss_count = 0usize;

    for epoch in 0..n_epochs {
        indices.shuffle(rng);
        for mb in 0..n_mb {
            let idx = &indices[mb * mb_size..(mb + 1) * mb_size];
            let x = flat_obs.gather_rows(idx);
            let q = params.forward(&x);
            let mut upstream = Matrix::zeros(mb_size, params.output_dim);
            let mut loss = 0.0;
            for (row, &k) in idx.iter().enumerate() {
                let a = flat_actions[k];
                let err = q.get(row, a) - flat_targets[k];
                loss += err * err;
                upstream.set(row, a, 2.0 * err / mb_size as f64);
            }
            loss /= mb_size as f64;
            if !loss.is_finite() {
                return Err(Error::TrainingDivergence(format!(
                    "non-finite PQN loss at epoch {epoch}, minibatch {mb}"
                )));
            }
            loss_sum += loss;
            loss_count += 1;
            let mut grad = params.backward(&x, &upstream);
            if capture_micro_grads && epoch == 0 {
                micro_grads.push(grad.clone());
            }
            clip_global_norm(&mut grad, max_norm);
            let mut flat = params.flatten();
            adam_step(&mut flat, opt, &grad, lr)?;
            params.unflatten_from(&flat);
        }
    }
    Ok((loss_sum / loss_count as f64, micro_grads))
}
