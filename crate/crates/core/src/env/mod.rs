//! Seedable vectorized toy environments stepped in lockstep with auto-reset.
//!
//! Four environments cover the regimes the learners need: a deterministic
//! chain, a stochastic gridworld, cart-pole physics, and a continuous
//! double integrator. Each of the `E` parallel copies owns an independent
//! RNG stream derived from `(seed, index)`, so results never depend on
//! stepping order.

mod dynamics;

use crate::error::{Error, Result};
use crate::math::Matrix;
use crate::rng;
use rand_chacha::ChaCha8Rng;

pub use dynamics::EnvState;

/// Action space of an environment.
#[derive(Debug, Clone, PartialEq)]
pub enum ActionKind {
    Discrete { n: usize },
    Continuous { dim: usize, low: Vec<f64>, high: Vec<f64> },
}

/// Static description of an environment family.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub obs_dim: usize,
    pub action_kind: ActionKind,
    pub max_episode_len: u32,
}

/// One action for one environment.
#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

/// Result of stepping all `E` environments once.
///
/// `obs` rows are post-reset observations for environments that finished;
/// `final_obs` keeps the pre-reset observation of the state actually
/// reached, which the return computations need to bootstrap truncated
/// episodes. The two matrices agree wherever `done` is false.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub obs: Matrix,
    pub reward: Vec<f64>,
    pub done: Vec<bool>,
    pub truncated: Vec<bool>,
    pub final_obs: Matrix,
}

/// `E` environments of one family, stepped in lockstep.
pub struct EnvBatch {
    spec: EnvSpec,
    name: &'static str,
    states: Vec<EnvState>,
    rngs: Vec<ChaCha8Rng>,
    step_counts: Vec<u32>,
}

/// Spec lookup without constructing environments (used by config
/// validation).
pub fn env_spec(name: &str) -> Result<EnvSpec> {
    match name {
        "chain" => Ok(dynamics::chain_spec()),
        "gridroom" => Ok(dynamics::gridroom_spec()),
        "cartpole_lite" => Ok(dynamics::cartpole_spec()),
        "pointmass" => Ok(dynamics::pointmass_spec()),
        other => Err(Error::Config(format!(
            "unknown environment '{other}' (expected chain, gridroom, cartpole_lite, pointmass)"
        ))),
    }
}

/// Build `count` environments, each reset with its own RNG stream derived
/// from `(seed, index)`.
pub fn make_env(name: &str, count: usize, seed: u64) -> Result<EnvBatch> {
    if count < 1 {
        return Err(Error::Config("environment count must be >= 1".into()));
    }
    let (spec, name) = match name {
        "chain" => (dynamics::chain_spec(), "chain"),
        "gridroom" => (dynamics::gridroom_spec(), "gridroom"),
        "cartpole_lite" => (dynamics::cartpole_spec(), "cartpole_lite"),
        "pointmass" => (dynamics::pointmass_spec(), "pointmass"),
        other => {
            return Err(Error::Config(format!(
                "unknown environment '{other}' (expected chain, gridroom, cartpole_lite, pointmass)"
            )))
        }
    };
    let mut rngs: Vec<ChaCha8Rng> = (0..count)
        .map(|i| rng::stream(seed, &format!("env/{i}")))
        .collect();
    let states = rngs
        .iter_mut()
        .map(|r| dynamics::reset(name, r))
        .collect();
    Ok(EnvBatch {
        spec,
        name,
        states,
        rngs,
        step_counts: vec![0; count],
    })
}

impl EnvBatch {
    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn num_envs(&self) -> usize {
        self.states.len()
    }

    pub fn name(&self) -> &'static str {
        self.name
    }

    /// Current observations, one row per environment.
    pub fn observe(&self) -> Matrix {
        let mut obs = Matrix::zeros(self.num_envs(), self.spec.obs_dim);
        for (i, s) in self.states.iter().enumerate() {
            s.write_obs(obs.row_mut(i));
        }
        obs
    }

    /// Advance every environment one step. Terminated or time-limited
    /// environments are reset in place before the call returns.
    pub fn step_all(&mut self, actions: &[Action]) -> Result<StepResult> {
        let e = self.num_envs();
        if actions.len() != e {
            return Err(Error::Contract(format!(
                "expected {e} actions, got {}",
                actions.len()
            )));
        }
        let mut reward = vec![0.0; e];
        let mut done = vec![false; e];
        let mut truncated = vec![false; e];
        let mut obs = Matrix::zeros(e, self.spec.obs_dim);
        let mut final_obs = Matrix::zeros(e, self.spec.obs_dim);

        for i in 0..e {
            let action = validate_action(&self.spec.action_kind, &actions[i])?;
            let (r, terminal) =
                self.states[i].step(self.name, &action, &mut self.rngs[i]);
            self.step_counts[i] += 1;
            reward[i] = r;
            if terminal {
                done[i] = true;
            } else if self.step_counts[i] >= self.spec.max_episode_len {
                done[i] = true;
                truncated[i] = true;
            }
            self.states[i].write_obs(final_obs.row_mut(i));
            if done[i] {
                self.states[i] = dynamics::reset(self.name, &mut self.rngs[i]);
                self.step_counts[i] = 0;
            }
            self.states[i].write_obs(obs.row_mut(i));
        }
        Ok(StepResult {
            obs,
            reward,
            done,
            truncated,
            final_obs,
        })
    }

    /// Steps taken in the current episode, per environment.
    pub fn step_counts(&self) -> &[u32] {
        &self.step_counts
    }
}

/// Check an action against the spec; continuous actions are clipped to
/// bounds before dynamics, out-of-range discrete actions are errors.
fn validate_action(kind: &ActionKind, action: &Action) -> Result<Action> {
    match (kind, action) {
        (ActionKind::Discrete { n }, Action::Discrete(a)) => {
            if a >= n {
                Err(Error::Contract(format!(
                    "discrete action {a} out of range 0..{n}"
                )))
            } else {
                Ok(Action::Discrete(*a))
            }
        }
        (ActionKind::Continuous { dim, low, high }, Action::Continuous(v)) => {
            if v.len() != *dim {
                return Err(Error::Contract(format!(
                    "continuous action has dim {}, expected {dim}",
                    v.len()
                )));
            }
            let clipped = v
                .iter()
                .zip(low.iter().zip(high))
                .map(|(&x, (&lo, &hi))| x.clamp(lo, hi))
                .collect();
            Ok(Action::Continuous(clipped))
        }
        _ => Err(Error::Contract(
            "action type does not match environment action space".into(),
        )),
    }
}

#[cfg(test)]
mod tests;
