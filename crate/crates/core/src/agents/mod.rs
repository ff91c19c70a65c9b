//! The learners the batch scheduler plugs into.
//!
//! Three of them: a simplified PQN (fresh-rollout Q(λ) regression on a
//! layer-normalized network, no target network), PPO with GAE for
//! continuous control, and a minimal replay-buffer DQN for the
//! batch-size-range variant of the scheduler.

mod ppo;
mod pqn;
mod replay;
mod rollout;

pub use ppo::{ppo_update, GaussianPolicy, PpoStats, PpoUpdateCfg, LOG_STD_MAX, LOG_STD_MIN};
pub use pqn::pqn_update;
pub use replay::{replay_dqn_update, ReplayBuffer, Transition};
pub use rollout::{collect_gaussian_rollout, collect_q_rollout, gae, q_lambda_returns, GaeResult, RolloutBuffer};

pub const EPS_START: f64 = 1.0;
pub const EPS_END: f64 = 0.001;
pub const EPS_FRACTION: f64 = 0.10;

/// Linear exploration schedule: `start` at t=0 down to `end` at
/// `fraction * total`, constant afterwards.
pub fn epsilon_schedule(t: u64, total: u64, start: f64, end: f64, fraction: f64) -> f64 {
    let horizon = fraction * total as f64;
    if horizon <= 0.0 || t as f64 >= horizon {
        end
    } else {
        start + (end - start) * t as f64 / horizon
    }
}

/// The default schedule: 1.0 → 0.001 over the first 10% of training.
pub fn epsilon_at(t: u64, total: u64) -> f64 {
    epsilon_schedule(t, total, EPS_START, EPS_END, EPS_FRACTION)
}
