//! 2-D powered-descent lander.
//!
//! A rigid body with a main engine (body-up thrust) and lateral thrusters
//! (side force plus torque) descends toward a pad at the origin under
//! gravity. State is `(x, y, vx, vy, theta, omega, leg_left, leg_right)`;
//! actions are `(main in [0, 1], lateral in [-1, 1])`. Integration is
//! semi-implicit Euler, so with zero thrust the vertical velocity loses
//! exactly `g * dt` per step. Reward is potential-based shaping toward a
//! soft, upright, centered touchdown, minus fuel cost, with a terminal
//! bonus for landing and penalty for crashing or flying away.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{stream_rng, substream};

use super::{check_action, seed_to_words, words_to_seed, EnvSpec, EnvState, Environment, StepResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LanderParams {
    pub env_id: String,
    pub gravity: f64,
    /// Acceleration of the main engine at full throttle.
    pub main_thrust: f64,
    /// Side acceleration of the lateral thrusters at full deflection.
    pub lateral_thrust: f64,
    /// Angular acceleration per unit of lateral action.
    pub torque: f64,
    pub dt: f64,
    /// Initial altitude; other start coordinates are sampled per seed.
    pub start_y: f64,
    pub start_x_range: f64,
    pub start_vx_range: f64,
    /// Gaussian wind acceleration on vx per step; 0 disables.
    pub wind_std: f64,
    pub horizon: usize,
}

impl Default for LanderParams {
    fn default() -> Self {
        Self {
            env_id: "lander".into(),
            gravity: 1.0,
            main_thrust: 2.0,
            lateral_thrust: 0.6,
            torque: 4.0,
            dt: 0.02,
            start_y: 1.5,
            start_x_range: 0.3,
            start_vx_range: 0.4,
            wind_std: 0.0,
            horizon: 150,
        }
    }
}

// internal = [x, y, vx, vy, theta, omega, legL, legR, step, noise_hi, noise_lo, done]
const IDX_X: usize = 0;
const IDX_Y: usize = 1;
const IDX_VX: usize = 2;
const IDX_VY: usize = 3;
const IDX_TH: usize = 4;
const IDX_OM: usize = 5;
const IDX_LEGL: usize = 6;
const IDX_LEGR: usize = 7;
const IDX_T: usize = 8;
const IDX_HI: usize = 9;
const IDX_LO: usize = 10;
const IDX_DONE: usize = 11;
const INTERNAL_LEN: usize = 12;

pub struct LanderEnv {
    spec: EnvSpec,
    params: LanderParams,
    internal: Vec<f64>,
}

impl LanderEnv {
    pub fn new(params: LanderParams) -> Result<Self> {
        if params.gravity <= 0.0 || params.dt <= 0.0 || params.start_y <= 0.0 {
            return Err(Error::Config("invalid lander parameters".into()));
        }
        let spec = EnvSpec {
            env_id: params.env_id.clone(),
            state_dim: 8,
            action_dim: 2,
            action_low: vec![0.0, -1.0],
            action_high: vec![1.0, 1.0],
            horizon: params.horizon,
        };
        spec.validate()?;
        Ok(Self { spec, params, internal: vec![0.0; INTERNAL_LEN] })
    }

    fn observe(internal: &[f64]) -> Vec<f64> {
        internal[..8].to_vec()
    }

    fn state(&self) -> EnvState {
        EnvState { observable: Self::observe(&self.internal), internal: self.internal.clone() }
    }

    /// Potential used for reward shaping: closer, slower, more upright, and
    /// legs on the ground are all better.
    fn shaping(internal: &[f64]) -> f64 {
        let (x, y) = (internal[IDX_X], internal[IDX_Y]);
        let (vx, vy) = (internal[IDX_VX], internal[IDX_VY]);
        -100.0 * (x * x + y * y).sqrt() - 100.0 * (vx * vx + vy * vy).sqrt()
            - 100.0 * internal[IDX_TH].abs()
            + 10.0 * internal[IDX_LEGL]
            + 10.0 * internal[IDX_LEGR]
    }
}

impl Environment for LanderEnv {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> EnvState {
        let mut rng = stream_rng(seed, "lander-init", 0);
        let p = &self.params;
        let mut internal = vec![0.0; INTERNAL_LEN];
        internal[IDX_X] = rng.random_range(-p.start_x_range..p.start_x_range);
        internal[IDX_Y] = p.start_y;
        internal[IDX_VX] = rng.random_range(-p.start_vx_range..p.start_vx_range);
        internal[IDX_VY] = rng.random_range(-0.2..0.0);
        internal[IDX_TH] = rng.random_range(-0.1..0.1);
        let (hi, lo) = seed_to_words(substream(seed, "lander-noise", 0));
        internal[IDX_HI] = hi;
        internal[IDX_LO] = lo;
        self.internal = internal;
        self.state()
    }

    fn reset_to(&mut self, state: &EnvState) -> Result<EnvState> {
        if state.internal.len() != INTERNAL_LEN {
            return Err(Error::Env(format!(
                "foreign internal state: expected {INTERNAL_LEN} slots, got {}",
                state.internal.len()
            )));
        }
        if state.internal.iter().any(|v| !v.is_finite()) {
            return Err(Error::Env("non-finite internal state".into()));
        }
        words_to_seed(state.internal[IDX_HI], state.internal[IDX_LO])?;
        if ![0.0, 1.0].contains(&state.internal[IDX_DONE]) {
            return Err(Error::Env("corrupt done flag".into()));
        }
        self.internal = state.internal.clone();
        Ok(self.state())
    }

    fn reseed_noise(&mut self, seed: u64) {
        let (hi, lo) = seed_to_words(seed);
        self.internal[IDX_HI] = hi;
        self.internal[IDX_LO] = lo;
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        check_action(&self.spec, action)?;
        if self.internal[IDX_DONE] == 1.0 {
            return Ok(StepResult { next_state: self.state(), reward: 0.0, done: true });
        }
        let p = &self.params;
        let (main, lateral) = (action[0], action[1]);
        let before = Self::shaping(&self.internal);

        let th = self.internal[IDX_TH];
        let mut ax = -th.sin() * p.main_thrust * main + th.cos() * p.lateral_thrust * lateral;
        let ay = th.cos() * p.main_thrust * main + th.sin() * p.lateral_thrust * lateral - p.gravity;
        if p.wind_std > 0.0 {
            let base = words_to_seed(self.internal[IDX_HI], self.internal[IDX_LO])?;
            let mut rng = stream_rng(base, "lander-step", self.internal[IDX_T] as u64);
            let normal = Normal::new(0.0, p.wind_std).map_err(|e| Error::Env(e.to_string()))?;
            ax += normal.sample(&mut rng);
        }
        // Semi-implicit Euler: velocities first, then positions.
        self.internal[IDX_VX] += ax * p.dt;
        self.internal[IDX_VY] += ay * p.dt;
        self.internal[IDX_OM] += -p.torque * lateral * p.dt;
        self.internal[IDX_X] += self.internal[IDX_VX] * p.dt;
        self.internal[IDX_Y] += self.internal[IDX_VY] * p.dt;
        self.internal[IDX_TH] += self.internal[IDX_OM] * p.dt;
        self.internal[IDX_T] += 1.0;

        let y = self.internal[IDX_Y];
        let th = self.internal[IDX_TH];
        self.internal[IDX_LEGL] = f64::from(y <= 0.02 && th <= 0.15);
        self.internal[IDX_LEGR] = f64::from(y <= 0.02 && th >= -0.15);

        let mut reward = Self::shaping(&self.internal) - before
            - 0.3 * main.abs()
            - 0.03 * lateral.abs();
        let mut done = false;
        if y <= 0.0 {
            self.internal[IDX_Y] = 0.0;
            done = true;
            let gentle = self.internal[IDX_VY].abs() <= 0.5
                && self.internal[IDX_VX].abs() <= 0.5
                && th.abs() <= 0.3;
            reward += if gentle { 100.0 } else { -100.0 };
        } else if self.internal[IDX_X].abs() > 2.5 || y > 3.0 {
            done = true;
            reward += -100.0;
        }
        if done {
            self.internal[IDX_DONE] = 1.0;
        }
        Ok(StepResult { next_state: self.state(), reward, done })
    }
}
