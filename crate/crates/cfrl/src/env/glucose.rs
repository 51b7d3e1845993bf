//! Blood-glucose regulation via insulin dosing.
//!
//! Dynamics are a Bergman-style minimal model with first-order meal
//! absorption:
//!
//! ```text
//! dG/dt = -p1 (G - Gb) - X G + Ra(t) / V_G
//! dX/dt = -p2 X + p3 (I - Ib)
//! dI/dt = -k_I (I - Ib) + u / V_I
//! Ra(t) = sum_m carbs_m * carb_factor * k_abs * exp(-k_abs (t - t_m)),  t >= t_m
//! ```
//!
//! `G` is plasma glucose (mg/dL), `X` remote insulin action, `I` plasma
//! insulin, `u` the insulin infusion action. Meal times are fixed by
//! configuration; carb sizes are randomized per episode seed. Time steps are
//! `dt_minutes` of simulated time, integrated with classic RK4 substeps.
//! Insulin acts through the slow `X` compartment, so doses pay off tens of
//! minutes later — the delayed, prolonged effect that makes dosing hard.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{stream_rng, substream};

use super::{check_action, seed_to_words, words_to_seed, EnvSpec, EnvState, Environment, StepResult};

/// Piecewise reward over glucose readings. Constant inside the target band,
/// a smaller constant in the surrounding acceptable band, and linearly
/// worsening penalties outside it (steeper on the hypoglycemic side).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardTiers {
    pub target_low: f64,
    pub target_high: f64,
    pub target_reward: f64,
    pub band_low: f64,
    pub band_high: f64,
    pub band_reward: f64,
    pub hypo_base: f64,
    pub hypo_slope: f64,
    pub hyper_base: f64,
    pub hyper_slope: f64,
}

impl Default for RewardTiers {
    fn default() -> Self {
        Self {
            target_low: 90.0,
            target_high: 140.0,
            target_reward: 1.0,
            band_low: 70.0,
            band_high: 180.0,
            band_reward: 0.5,
            hypo_base: -1.5,
            hypo_slope: 0.01,
            hyper_base: -1.0,
            hyper_slope: 0.005,
        }
    }
}

impl RewardTiers {
    pub fn reward(&self, g: f64) -> f64 {
        if g >= self.target_low && g <= self.target_high {
            self.target_reward
        } else if g >= self.band_low && g <= self.band_high {
            self.band_reward
        } else if g < self.band_low {
            self.hypo_base - self.hypo_slope * (self.band_low - g)
        } else {
            self.hyper_base - self.hyper_slope * (g - self.band_high)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlucoseParams {
    pub env_id: String,
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
    pub g_b: f64,
    pub i_b: f64,
    pub k_i: f64,
    pub v_g: f64,
    pub v_i: f64,
    /// Meal absorption rate (1/min).
    pub k_abs: f64,
    /// Glucose-equivalent injection per gram of carbohydrate (mg/dL per g).
    pub carb_factor: f64,
    /// Minimum insulin infusion (action lower bound); a pump's basal floor.
    pub u_min: f64,
    /// Maximum insulin infusion (action upper bound).
    pub u_max: f64,
    /// Minutes of simulated time per environment step.
    pub dt_minutes: f64,
    /// RK4 substeps per environment step.
    pub substeps: usize,
    /// Meal times in minutes from episode start (fixed schedule).
    pub meal_times: Vec<f64>,
    /// Carb sizes are uniform in `[carbs_low, carbs_high]` grams per meal.
    pub carbs_low: f64,
    pub carbs_high: f64,
    /// Initial glucose is uniform in this basal band.
    pub basal_low: f64,
    pub basal_high: f64,
    /// Episode ends (done) outside `[terminal_low, terminal_high]`.
    pub terminal_low: f64,
    pub terminal_high: f64,
    pub terminal_penalty: f64,
    /// Window for the "recent carbohydrate intake" observable (minutes).
    pub recent_carb_window: f64,
    /// Std-dev of per-step additive process noise on glucose; 0 disables.
    pub process_noise_std: f64,
    pub horizon: usize,
    pub tiers: RewardTiers,
}

impl Default for GlucoseParams {
    fn default() -> Self {
        Self {
            env_id: "glucose".into(),
            p1: 0.028,
            p2: 0.025,
            p3: 1.3e-5,
            g_b: 110.0,
            i_b: 10.0,
            k_i: 0.09,
            v_g: 1.6,
            v_i: 0.12,
            k_abs: 0.02,
            carb_factor: 5.0,
            u_min: 0.0,
            u_max: 0.5,
            dt_minutes: 3.0,
            substeps: 3,
            meal_times: vec![30.0, 150.0],
            carbs_low: 40.0,
            carbs_high: 80.0,
            basal_low: 100.0,
            basal_high: 140.0,
            terminal_low: 40.0,
            terminal_high: 350.0,
            terminal_penalty: -5.0,
            recent_carb_window: 30.0,
            process_noise_std: 0.0,
            horizon: 80,
            tiers: RewardTiers::default(),
        }
    }
}

// internal = [G, X, I, G_prev, step, carbs per meal ..., noise_hi, noise_lo, done]
const IDX_G: usize = 0;
const IDX_X: usize = 1;
const IDX_I: usize = 2;
const IDX_GPREV: usize = 3;
const IDX_T: usize = 4;
const IDX_CARBS: usize = 5;

pub struct GlucoseEnv {
    spec: EnvSpec,
    params: GlucoseParams,
    internal: Vec<f64>,
}

impl GlucoseEnv {
    pub fn new(params: GlucoseParams) -> Result<Self> {
        let ok = params.p1 > 0.0
            && params.p2 > 0.0
            && params.k_i > 0.0
            && params.v_g > 0.0
            && params.v_i > 0.0
            && params.k_abs > 0.0
            && params.dt_minutes > 0.0
            && params.substeps >= 1
            && params.u_min >= 0.0
            && params.u_max > params.u_min
            && params.carbs_low <= params.carbs_high
            && params.basal_low <= params.basal_high
            && params.terminal_low < params.terminal_high;
        if !ok {
            return Err(Error::Config("invalid glucose parameters".into()));
        }
        let spec = EnvSpec {
            env_id: params.env_id.clone(),
            state_dim: 3,
            action_dim: 1,
            action_low: vec![params.u_min],
            action_high: vec![params.u_max],
            horizon: params.horizon,
        };
        spec.validate()?;
        let internal_len = Self::internal_len(&params);
        Ok(Self { spec, params, internal: vec![0.0; internal_len] })
    }

    fn internal_len(params: &GlucoseParams) -> usize {
        IDX_CARBS + params.meal_times.len() + 3
    }

    fn idx_hi(&self) -> usize {
        IDX_CARBS + self.params.meal_times.len()
    }

    fn idx_done(&self) -> usize {
        self.idx_hi() + 2
    }

    /// Glucose appearance from meals at minute `t` (per-minute rate).
    fn ra(&self, t: f64, carbs: &[f64]) -> f64 {
        self.params
            .meal_times
            .iter()
            .zip(carbs)
            .filter(|(tm, _)| t >= **tm)
            .map(|(tm, c)| c * self.params.carb_factor * self.params.k_abs
                * (-self.params.k_abs * (t - tm)).exp())
            .sum()
    }

    /// Grams ingested within the trailing observation window at minute `t`.
    fn recent_carbs(&self, t: f64, carbs: &[f64]) -> f64 {
        self.params
            .meal_times
            .iter()
            .zip(carbs)
            .filter(|(tm, _)| t >= **tm && t - **tm < self.params.recent_carb_window)
            .map(|(_, c)| c)
            .sum()
    }

    fn derivatives(&self, t: f64, g: f64, x: f64, i: f64, u: f64, carbs: &[f64]) -> (f64, f64, f64) {
        let p = &self.params;
        let dg = -p.p1 * (g - p.g_b) - x * g + self.ra(t, carbs) / p.v_g;
        let dx = -p.p2 * x + p.p3 * (i - p.i_b);
        let di = -p.k_i * (i - p.i_b) + u / p.v_i;
        (dg, dx, di)
    }

    /// Observation: scaled glucose reading, per-step rate of change, and
    /// recent carbohydrate intake.
    fn observe(&self, internal: &[f64]) -> Vec<f64> {
        let g = internal[IDX_G];
        let rate = g - internal[IDX_GPREV];
        let t = internal[IDX_T] * self.params.dt_minutes;
        let carbs = &internal[IDX_CARBS..IDX_CARBS + self.params.meal_times.len()];
        vec![(g - self.params.g_b) / 50.0, rate / 5.0, self.recent_carbs(t, carbs) / 50.0]
    }

    fn state(&self) -> EnvState {
        EnvState { observable: self.observe(&self.internal), internal: self.internal.clone() }
    }
}

impl Environment for GlucoseEnv {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> EnvState {
        let mut rng = stream_rng(seed, "glucose-init", 0);
        let p = &self.params;
        let g = if p.basal_low == p.basal_high {
            p.basal_low
        } else {
            rng.random_range(p.basal_low..p.basal_high)
        };
        let mut internal = vec![0.0; Self::internal_len(p)];
        internal[IDX_G] = g;
        internal[IDX_X] = 0.0;
        internal[IDX_I] = p.i_b;
        internal[IDX_GPREV] = g;
        internal[IDX_T] = 0.0;
        for m in 0..p.meal_times.len() {
            internal[IDX_CARBS + m] = if p.carbs_low == p.carbs_high {
                p.carbs_low
            } else {
                rng.random_range(p.carbs_low..p.carbs_high)
            };
        }
        let (hi, lo) = seed_to_words(substream(seed, "glucose-noise", 0));
        let idx_hi = self.idx_hi();
        internal[idx_hi] = hi;
        internal[idx_hi + 1] = lo;
        self.internal = internal;
        self.state()
    }

    fn reset_to(&mut self, state: &EnvState) -> Result<EnvState> {
        let expected = Self::internal_len(&self.params);
        if state.internal.len() != expected {
            return Err(Error::Env(format!(
                "foreign internal state: expected {expected} slots, got {}",
                state.internal.len()
            )));
        }
        if state.internal.iter().any(|v| !v.is_finite()) {
            return Err(Error::Env("non-finite internal state".into()));
        }
        let idx_hi = self.idx_hi();
        words_to_seed(state.internal[idx_hi], state.internal[idx_hi + 1])?;
        let done = state.internal[expected - 1];
        if done != 0.0 && done != 1.0 {
            return Err(Error::Env(format!("corrupt done flag {done}")));
        }
        self.internal = state.internal.clone();
        Ok(self.state())
    }

    fn reseed_noise(&mut self, seed: u64) {
        let (hi, lo) = seed_to_words(seed);
        let idx = self.idx_hi();
        self.internal[idx] = hi;
        self.internal[idx + 1] = lo;
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        check_action(&self.spec, action)?;
        let idx_done = self.idx_done();
        if self.internal[idx_done] == 1.0 {
            // Absorbing terminal state.
            return Ok(StepResult { next_state: self.state(), reward: 0.0, done: true });
        }
        let u = action[0];
        let p = self.params.clone();
        let carbs: Vec<f64> =
            self.internal[IDX_CARBS..IDX_CARBS + p.meal_times.len()].to_vec();
        let (mut g, mut x, mut i) = (self.internal[IDX_G], self.internal[IDX_X], self.internal[IDX_I]);
        let g_before = g;
        let t0 = self.internal[IDX_T] * p.dt_minutes;
        let h = p.dt_minutes / p.substeps as f64;
        for k in 0..p.substeps {
            let t = t0 + k as f64 * h;
            let (k1g, k1x, k1i) = self.derivatives(t, g, x, i, u, &carbs);
            let (k2g, k2x, k2i) =
                self.derivatives(t + h / 2.0, g + h / 2.0 * k1g, x + h / 2.0 * k1x, i + h / 2.0 * k1i, u, &carbs);
            let (k3g, k3x, k3i) =
                self.derivatives(t + h / 2.0, g + h / 2.0 * k2g, x + h / 2.0 * k2x, i + h / 2.0 * k2i, u, &carbs);
            let (k4g, k4x, k4i) =
                self.derivatives(t + h, g + h * k3g, x + h * k3x, i + h * k3i, u, &carbs);
            g += h / 6.0 * (k1g + 2.0 * k2g + 2.0 * k3g + k4g);
            x += h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
            i += h / 6.0 * (k1i + 2.0 * k2i + 2.0 * k3i + k4i);
        }
        if p.process_noise_std > 0.0 {
            let idx_hi = self.idx_hi();
            let base = words_to_seed(self.internal[idx_hi], self.internal[idx_hi + 1])?;
            let mut rng = stream_rng(base, "glucose-step", self.internal[IDX_T] as u64);
            let normal = Normal::new(0.0, p.process_noise_std)
                .map_err(|e| Error::Env(e.to_string()))?;
            g += normal.sample(&mut rng);
        }
        if !(g.is_finite() && x.is_finite() && i.is_finite()) {
            return Err(Error::Diverged("glucose integration produced non-finite state".into()));
        }
        self.internal[IDX_G] = g;
        self.internal[IDX_X] = x;
        self.internal[IDX_I] = i;
        self.internal[IDX_GPREV] = g_before;
        self.internal[IDX_T] += 1.0;
        let mut reward = p.tiers.reward(g);
        let done = g < p.terminal_low || g > p.terminal_high;
        if done {
            reward += p.terminal_penalty;
            self.internal[idx_done] = 1.0;
        }
        Ok(StepResult { next_state: self.state(), reward, done })
    }
}
