//! 1-D point mass: a double integrator the agent pushes toward a goal.
//!
//! Deliberately tiny and analytically checkable; reinforcement-learning
//! acceptance tests run on this environment.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{stream_rng, substream};

use super::{check_action, seed_to_words, words_to_seed, EnvSpec, EnvState, Environment, StepResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PointMassParams {
    /// Goal position; reward is `-|x - goal|`.
    pub goal: f64,
    /// Initial position is uniform in `[start_low, start_high]`.
    pub start_low: f64,
    pub start_high: f64,
    /// Integration step (seconds).
    pub dt: f64,
    /// Std-dev of Gaussian acceleration noise; 0 disables it.
    pub noise_std: f64,
    pub horizon: usize,
}

impl Default for PointMassParams {
    fn default() -> Self {
        Self { goal: 1.0, start_low: -0.5, start_high: 0.5, dt: 0.1, noise_std: 0.0, horizon: 40 }
    }
}

// internal = [x, v, step, noise_hi, noise_lo]
const IDX_X: usize = 0;
const IDX_V: usize = 1;
const IDX_T: usize = 2;
const IDX_HI: usize = 3;
const IDX_LO: usize = 4;
const INTERNAL_LEN: usize = 5;

pub struct PointMassEnv {
    spec: EnvSpec,
    params: PointMassParams,
    internal: Vec<f64>,
}

impl PointMassEnv {
    pub fn new(params: PointMassParams) -> Result<Self> {
        if !(params.start_low <= params.start_high) || !params.dt.is_finite() || params.dt <= 0.0 {
            return Err(Error::Config("invalid point-mass parameters".into()));
        }
        let spec = EnvSpec {
            env_id: "pointmass".into(),
            state_dim: 2,
            action_dim: 1,
            action_low: vec![-1.0],
            action_high: vec![1.0],
            horizon: params.horizon,
        };
        spec.validate()?;
        Ok(Self { spec, params, internal: vec![0.0; INTERNAL_LEN] })
    }

    fn observe(internal: &[f64]) -> Vec<f64> {
        vec![internal[IDX_X], internal[IDX_V]]
    }

    fn state(&self) -> EnvState {
        EnvState { observable: Self::observe(&self.internal), internal: self.internal.clone() }
    }
}

impl Environment for PointMassEnv {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> EnvState {
        let mut rng = stream_rng(seed, "pointmass-init", 0);
        let x = if self.params.start_low == self.params.start_high {
            self.params.start_low
        } else {
            rng.random_range(self.params.start_low..self.params.start_high)
        };
        let (hi, lo) = seed_to_words(substream(seed, "pointmass-noise", 0));
        self.internal = vec![x, 0.0, 0.0, hi, lo];
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
        let dt = self.params.dt;
        let mut accel = action[0];
        if self.params.noise_std > 0.0 {
            let base = words_to_seed(self.internal[IDX_HI], self.internal[IDX_LO])?;
            let mut rng = stream_rng(base, "pointmass-step", self.internal[IDX_T] as u64);
            let normal = Normal::new(0.0, self.params.noise_std)
                .map_err(|e| Error::Env(e.to_string()))?;
            accel += normal.sample(&mut rng);
        }
        self.internal[IDX_V] += accel * dt;
        self.internal[IDX_X] += self.internal[IDX_V] * dt;
        self.internal[IDX_T] += 1.0;
        let reward = -(self.internal[IDX_X] - self.params.goal).abs();
        Ok(StepResult { next_state: self.state(), reward, done: false })
    }
}
