//! Adaptive batch scaling for reinforcement learning, at desk scale.
//!
//! The crate is organized around five pieces:
//!
//! - [`env`]: seedable vectorized toy environments (chain, gridroom,
//!   cartpole_lite, pointmass) stepped in lockstep with auto-reset.
//! - [`net`]: a from-scratch MLP with layer normalization, exact
//!   backpropagation, global-norm clipping and Adam.
//! - [`agents`]: the learners the scheduler plugs into — a simplified PQN
//!   (Q(λ) targets, no target network), PPO with GAE for continuous
//!   control, and a minimal replay-buffer DQN.
//! - [`scheduler`]: behavioral divergence, the log-interpolated rollout
//!   schedule with EMA smoothing and epoch compensation, the gradient
//!   noise scale alternative, the Gaussian-KL proxy, and the replay-batch
//!   variant.
//! - [`config`] / [`train`] / [`compare`]: the experiment harness — config
//!   parsing, deterministic training loops, CSV metrics, run comparison
//!   and SVG charts.

pub mod agents;
pub mod compare;
pub mod config;
pub mod env;
pub mod error;
pub mod math;
pub mod metrics;
pub mod net;
pub mod rng;
pub mod scheduler;
pub mod selftest;
pub mod svg;
pub mod train;

pub use config::{ExperimentConfig, Mode};
pub use error::{Error, Result};
pub use math::Matrix;
