//! Cart-pole where only the two velocities are observed.

use serde::{Deserialize, Serialize};

use crate::env::{check_action, EnvSpec, Environment, Mode, ObsSpace, Observation, StepResult};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Physical constants, classic control values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartPoleConfig {
    pub horizon: usize,
    pub gravity: f64,
    pub mass_cart: f64,
    pub mass_pole: f64,
    /// Half the pole length.
    pub half_length: f64,
    pub force_mag: f64,
    /// Integration step in seconds.
    pub tau: f64,
    pub theta_limit_rad: f64,
    pub x_limit: f64,
    /// Initial state components are uniform in `[-init_noise, init_noise]`.
    pub init_noise: f64,
}

impl Default for CartPoleConfig {
    fn default() -> Self {
        Self {
            horizon: 600,
            gravity: 9.8,
            mass_cart: 1.0,
            mass_pole: 0.1,
            half_length: 0.5,
            force_mag: 10.0,
            tau: 0.02,
            theta_limit_rad: 12.0 * 2.0 * std::f64::consts::PI / 360.0,
            x_limit: 2.4,
            init_noise: 0.05,
        }
    }
}

/// Full latent state `(x, x_dot, theta, theta_dot)`.
pub type CartState = [f64; 4];

/// One explicit Euler step under `force`.
pub fn dynamics(cfg: &CartPoleConfig, s: CartState, force: f64) -> CartState {
    let [x, x_dot, theta, theta_dot] = s;
    let total_mass = cfg.mass_cart + cfg.mass_pole;
    let pole_ml = cfg.mass_pole * cfg.half_length;
    let (sin, cos) = theta.sin_cos();
    let temp = (force + pole_ml * theta_dot * theta_dot * sin) / total_mass;
    let theta_acc = (cfg.gravity * sin - cos * temp)
        / (cfg.half_length * (4.0 / 3.0 - cfg.mass_pole * cos * cos / total_mass));
    let x_acc = temp - pole_ml * theta_acc * cos / total_mass;
    [
        x + cfg.tau * x_dot,
        x_dot + cfg.tau * x_acc,
        theta + cfg.tau * theta_dot,
        theta_dot + cfg.tau * theta_acc,
    ]
}

#[derive(Debug, Clone)]
pub struct VelocityCartPole {
    cfg: CartPoleConfig,
    spec: EnvSpec,
    state: CartState,
    t: usize,
    done: bool,
    started: bool,
}

pub fn make_velocity_cartpole(cfg: CartPoleConfig) -> Result<VelocityCartPole> {
    let spec = EnvSpec {
        name: "velocity_cartpole".into(),
        obs: ObsSpace::Continuous { dim: 2 },
        num_env_actions: 2,
        mode: Mode::Episodic,
        horizon: cfg.horizon,
    };
    spec.validate()?;
    Ok(VelocityCartPole {
        cfg,
        spec,
        state: [0.0; 4],
        t: 0,
        done: false,
        started: false,
    })
}

impl VelocityCartPole {
    pub fn latent(&self) -> CartState {
        self.state
    }

    /// Starts from an explicit latent state instead of a random one.
    pub fn reset_to(&mut self, state: CartState) -> Observation {
        self.state = state;
        self.t = 0;
        self.done = false;
        self.started = true;
        self.observe()
    }

    fn observe(&self) -> Observation {
        Observation::Vector(vec![self.state[1], self.state[3]])
    }
}

impl Environment for VelocityCartPole {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut RngStream) -> Observation {
        let n = self.cfg.init_noise;
        let mut s = [0.0; 4];
        for v in &mut s {
            *v = rng.uniform_range(-n, n);
        }
        self.reset_to(s)
    }

    fn step(&mut self, action: usize, _rng: &mut RngStream) -> Result<StepResult> {
        check_action(&self.spec, action)?;
        if !self.started {
            return Err(Error::contract("step before reset"));
        }
        if self.done {
            return Err(Error::contract("step after episode end"));
        }
        self.t += 1;
        let force = if action == 1 { self.cfg.force_mag } else { -self.cfg.force_mag };
        self.state = dynamics(&self.cfg, self.state, force);
        let fallen = self.state[0].abs() > self.cfg.x_limit || self.state[2].abs() > self.cfg.theta_limit_rad;
        self.done = fallen || self.t >= self.cfg.horizon;
        Ok(StepResult {
            next_obs: self.observe(),
            reward: 1.0,
            done: self.done,
            goal: None,
        })
    }

    fn k_star(&self) -> Option<usize> {
        Some(2)
    }

    fn kappa(&self) -> Option<usize> {
        Some(2)
    }
}
