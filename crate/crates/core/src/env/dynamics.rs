//! Per-environment state and transition dynamics.
//!
//! Observations are normalized to roughly [-1, 1] by construction so the
//! networks never need a separate normalization stage.

use super::{ActionKind, Action, EnvSpec};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

// chain: N states in a row, reward 1 at the right end.
pub const CHAIN_LEN: usize = 20;
// gridroom: open W×W room, slip probability, goal in the far corner.
pub const GRID_SIZE: i32 = 9;
pub const GRID_SLIP_PROB: f64 = 0.1;
pub const GRID_STEP_REWARD: f64 = -0.01;
// cartpole_lite: standard cart-pole constants, Euler integration.
pub const CP_GRAVITY: f64 = 9.8;
pub const CP_MASS_CART: f64 = 1.0;
pub const CP_MASS_POLE: f64 = 0.1;
pub const CP_HALF_LEN: f64 = 0.5;
pub const CP_FORCE: f64 = 10.0;
pub const CP_DT: f64 = 0.02;
pub const CP_THETA_LIMIT: f64 = 12.0 * std::f64::consts::PI / 180.0;
pub const CP_X_LIMIT: f64 = 2.4;
// pointmass: 2-D double integrator pushed toward the origin.
pub const PM_DT: f64 = 0.05;
pub const PM_VEL_LIMIT: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub enum EnvState {
    Chain { pos: usize },
    GridRoom { x: i32, y: i32 },
    CartPole { x: f64, x_dot: f64, theta: f64, theta_dot: f64 },
    PointMass { pos: [f64; 2], vel: [f64; 2] },
}

pub fn chain_spec() -> EnvSpec {
    EnvSpec {
        obs_dim: 1,
        action_kind: ActionKind::Discrete { n: 2 },
        max_episode_len: 60,
    }
}

pub fn gridroom_spec() -> EnvSpec {
    EnvSpec {
        obs_dim: 2,
        action_kind: ActionKind::Discrete { n: 4 },
        max_episode_len: 200,
    }
}

pub fn cartpole_spec() -> EnvSpec {
    EnvSpec {
        obs_dim: 4,
        action_kind: ActionKind::Discrete { n: 2 },
        max_episode_len: 500,
    }
}

pub fn pointmass_spec() -> EnvSpec {
    EnvSpec {
        obs_dim: 4,
        action_kind: ActionKind::Continuous {
            dim: 2,
            low: vec![-1.0, -1.0],
            high: vec![1.0, 1.0],
        },
        max_episode_len: 100,
    }
}

pub fn reset(name: &str, rng: &mut ChaCha8Rng) -> EnvState {
    match name {
        "chain" => EnvState::Chain { pos: 0 },
        "gridroom" => EnvState::GridRoom { x: 0, y: 0 },
        "cartpole_lite" => EnvState::CartPole {
            x: rng.gen_range(-0.05..0.05),
            x_dot: rng.gen_range(-0.05..0.05),
            theta: rng.gen_range(-0.05..0.05),
            theta_dot: rng.gen_range(-0.05..0.05),
        },
        "pointmass" => EnvState::PointMass {
            pos: [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
            vel: [0.0, 0.0],
        },
        other => unreachable!("unknown env {other}"),
    }
}

impl EnvState {
    /// Apply one (already validated and clipped) action.
    /// Returns (reward, terminal).
    pub fn step(&mut self, name: &str, action: &Action, rng: &mut ChaCha8Rng) -> (f64, bool) {
        match (self, action) {
            (EnvState::Chain { pos }, Action::Discrete(a)) => {
                debug_assert_eq!(name, "chain");
                if *a == 1 {
                    *pos += 1;
                } else {
                    *pos = pos.saturating_sub(1);
                }
                if *pos == CHAIN_LEN - 1 {
                    (1.0, true)
                } else {
                    (0.0, false)
                }
            }
            (EnvState::GridRoom { x, y }, Action::Discrete(a)) => {
                // 0 = up, 1 = down, 2 = left, 3 = right
                let intended = *a;
                let actual = if rng.gen_bool(GRID_SLIP_PROB) {
                    // slip: one of the two orthogonal directions
                    let ortho = if intended < 2 { [2usize, 3] } else { [0, 1] };
                    ortho[rng.gen_range(0..2)]
                } else {
                    intended
                };
                let (dx, dy) = match actual {
                    0 => (0, 1),
                    1 => (0, -1),
                    2 => (-1, 0),
                    _ => (1, 0),
                };
                *x = (*x + dx).clamp(0, GRID_SIZE - 1);
                *y = (*y + dy).clamp(0, GRID_SIZE - 1);
                if *x == GRID_SIZE - 1 && *y == GRID_SIZE - 1 {
                    (1.0, true)
                } else {
                    (GRID_STEP_REWARD, false)
                }
            }
            (EnvState::CartPole { x, x_dot, theta, theta_dot }, Action::Discrete(a)) => {
                let force = if *a == 1 { CP_FORCE } else { -CP_FORCE };
                let total_mass = CP_MASS_CART + CP_MASS_POLE;
                let pml = CP_MASS_POLE * CP_HALF_LEN;
                let cos_t = theta.cos();
                let sin_t = theta.sin();
                let temp = (force + pml * *theta_dot * *theta_dot * sin_t) / total_mass;
                let theta_acc = (CP_GRAVITY * sin_t - cos_t * temp)
                    / (CP_HALF_LEN * (4.0 / 3.0 - CP_MASS_POLE * cos_t * cos_t / total_mass));
                let x_acc = temp - pml * theta_acc * cos_t / total_mass;
                *x += CP_DT * *x_dot;
                *x_dot += CP_DT * x_acc;
                *theta += CP_DT * *theta_dot;
                *theta_dot += CP_DT * theta_acc;
                let terminal = theta.abs() > CP_THETA_LIMIT || x.abs() > CP_X_LIMIT;
                (1.0, terminal)
            }
            (EnvState::PointMass { pos, vel }, Action::Continuous(f)) => {
                for k in 0..2 {
                    vel[k] = (vel[k] + f[k] * PM_DT).clamp(-PM_VEL_LIMIT, PM_VEL_LIMIT);
                    pos[k] = (pos[k] + vel[k] * PM_DT).clamp(-1.0, 1.0);
                }
                let dist = (pos[0] * pos[0] + pos[1] * pos[1]).sqrt();
                (-dist, false)
            }
            _ => unreachable!("action/state kind mismatch survived validation"),
        }
    }

    pub fn write_obs(&self, out: &mut [f64]) {
        match self {
            EnvState::Chain { pos } => {
                out[0] = *pos as f64 / (CHAIN_LEN - 1) as f64 * 2.0 - 1.0;
            }
            EnvState::GridRoom { x, y } => {
                out[0] = *x as f64 / (GRID_SIZE - 1) as f64 * 2.0 - 1.0;
                out[1] = *y as f64 / (GRID_SIZE - 1) as f64 * 2.0 - 1.0;
            }
            EnvState::CartPole { x, x_dot, theta, theta_dot } => {
                out[0] = x / CP_X_LIMIT;
                out[1] = x_dot / 3.0;
                out[2] = theta / CP_THETA_LIMIT;
                out[3] = theta_dot / 3.0;
            }
            EnvState::PointMass { pos, vel } => {
                out[0] = pos[0];
                out[1] = pos[1];
                out[2] = vel[0] / PM_VEL_LIMIT;
                out[3] = vel[1] / PM_VEL_LIMIT;
            }
        }
    }
}
