//! Environment contract and the three bundled simulators.
//!
//! Environments are deterministic functions of (internal state, action,
//! noise stream). The full simulator state travels in [`EnvState::internal`],
//! which makes exact mid-episode restarts possible: counterfactual rollouts
//! restore a recorded internal vector with [`Environment::reset_to`] and then
//! either replay the stored noise stream or reseed it for fresh draws.

mod glucose;
mod lander;
mod pointmass;
mod scheduler;

pub use glucose::{GlucoseEnv, GlucoseParams, RewardTiers};
pub use lander::{LanderEnv, LanderParams};
pub use pointmass::{PointMassEnv, PointMassParams};
pub use scheduler::EnvScheduler;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Static description of an environment's interface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub env_id: String,
    pub state_dim: usize,
    pub action_dim: usize,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    /// Episode step cap, enforced by training loops (not by `step`).
    pub horizon: usize,
}

impl EnvSpec {
    pub fn validate(&self) -> Result<()> {
        if self.state_dim == 0 || self.action_dim == 0 {
            return Err(Error::InvalidValue("state/action dims must be >= 1".into()));
        }
        if self.action_low.len() != self.action_dim || self.action_high.len() != self.action_dim {
            return Err(Error::DimensionMismatch {
                expected: self.action_dim,
                got: self.action_low.len().min(self.action_high.len()),
            });
        }
        for (l, h) in self.action_low.iter().zip(&self.action_high) {
            if !(l.is_finite() && h.is_finite() && l < h) {
                return Err(Error::InvalidValue(format!("invalid action bounds [{l}, {h}]")));
            }
        }
        if self.horizon == 0 {
            return Err(Error::InvalidValue("horizon must be >= 1".into()));
        }
        Ok(())
    }

    /// Clip an action into the box; callers do this before `step`.
    pub fn clip_action(&self, action: &mut [f64]) {
        for ((a, l), h) in action.iter_mut().zip(&self.action_low).zip(&self.action_high) {
            *a = a.clamp(*l, *h);
        }
    }
}

/// A snapshot of the environment: what the agent sees plus the opaque full
/// simulator state needed for exact restarts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub observable: Vec<f64>,
    pub internal: Vec<f64>,
}

/// Outcome of one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_state: EnvState,
    pub reward: f64,
    /// True MDP termination. Horizon cuts are the caller's business.
    pub done: bool,
}

/// One inner transition surfaced by wrappers that play several base steps
/// per outer step (see the constrained-state wrapper).
#[derive(Debug, Clone, PartialEq)]
pub struct InnerStep {
    pub state: EnvState,
    pub action: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    /// Action was chosen by the wrapper's predefined policy, not the caller.
    pub forced: bool,
}

/// Contract shared by all simulators.
///
/// Stepping a terminated environment is allowed and absorbing: the state is
/// unchanged, the reward is zero, and `done` stays true. Fixed-length
/// counterfactual rollouts rely on this to always produce a full action
/// sequence.
pub trait Environment {
    fn spec(&self) -> &EnvSpec;

    /// Start a fresh episode. Identical seeds yield identical states.
    fn reset(&mut self, seed: u64) -> EnvState;

    /// Restore an exact previous state (same environment type required).
    /// The stored noise stream resumes where it left off; call
    /// [`Environment::reseed_noise`] afterwards for a fresh realization.
    fn reset_to(&mut self, state: &EnvState) -> Result<EnvState>;

    /// Replace the base seed of the per-step noise stream from here on.
    fn reseed_noise(&mut self, seed: u64);

    /// Advance one time step. Actions must already lie inside the bounds.
    fn step(&mut self, action: &[f64]) -> Result<StepResult>;

    /// Inner transitions accumulated since the last call. Plain simulators
    /// return an empty vector; callers then treat each outer step as its own
    /// inner step.
    fn drain_inner(&mut self) -> Vec<InnerStep> {
        Vec::new()
    }

    /// Upper bound on how many further inner steps this episode may take.
    /// Fixed-length rollouts set it before `reset_to` and before every step
    /// so that wrappers playing several base steps per outer step never
    /// overshoot the target length. Plain simulators ignore it.
    fn set_inner_budget(&mut self, _budget: usize) {}
}

impl<T: Environment + ?Sized> Environment for Box<T> {
    fn spec(&self) -> &EnvSpec {
        (**self).spec()
    }
    fn reset(&mut self, seed: u64) -> EnvState {
        (**self).reset(seed)
    }
    fn reset_to(&mut self, state: &EnvState) -> Result<EnvState> {
        (**self).reset_to(state)
    }
    fn reseed_noise(&mut self, seed: u64) {
        (**self).reseed_noise(seed)
    }
    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        (**self).step(action)
    }
    fn drain_inner(&mut self) -> Vec<InnerStep> {
        (**self).drain_inner()
    }
    fn set_inner_budget(&mut self, budget: usize) {
        (**self).set_inner_budget(budget)
    }
}

/// Validate an action against the spec: NaN is a domain error, and the
/// action must have the right dimension.
pub(crate) fn check_action(spec: &EnvSpec, action: &[f64]) -> Result<()> {
    if action.len() != spec.action_dim {
        return Err(Error::DimensionMismatch { expected: spec.action_dim, got: action.len() });
    }
    if action.iter().any(|a| a.is_nan()) {
        return Err(Error::Env("NaN action".into()));
    }
    Ok(())
}

/// Helpers for carrying a `u64` noise base inside an `f64` state vector
/// without precision loss: the two 32-bit halves are stored as exact small
/// integers.
pub(crate) fn seed_to_words(seed: u64) -> (f64, f64) {
    ((seed >> 32) as f64, (seed & 0xffff_ffff) as f64)
}

pub(crate) fn words_to_seed(hi: f64, lo: f64) -> Result<u64> {
    let decode = |w: f64| -> Result<u64> {
        if !(w.is_finite() && w >= 0.0 && w <= f64::from(u32::MAX) && w.fract() == 0.0) {
            return Err(Error::Env(format!("corrupt noise word {w} in internal state")));
        }
        Ok(w as u64)
    };
    Ok((decode(hi)? << 32) | decode(lo)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_words_round_trip() {
        for seed in [0u64, 1, 0xffff_ffff, 0x1_0000_0000, u64::MAX, 0xdead_beef_cafe_f00d] {
            let (hi, lo) = seed_to_words(seed);
            assert_eq!(words_to_seed(hi, lo).unwrap(), seed);
        }
    }

    #[test]
    fn corrupt_noise_words_rejected() {
        assert!(words_to_seed(-1.0, 0.0).is_err());
        assert!(words_to_seed(0.5, 0.0).is_err());
        assert!(words_to_seed(f64::from(u32::MAX) + 1.0, 0.0).is_err());
        assert!(words_to_seed(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn spec_validation_catches_bad_bounds() {
        let mut spec = EnvSpec {
            env_id: "x".into(),
            state_dim: 2,
            action_dim: 1,
            action_low: vec![1.0],
            action_high: vec![-1.0],
            horizon: 10,
        };
        assert!(spec.validate().is_err());
        spec.action_high = vec![2.0];
        assert!(spec.validate().is_ok());
    }

    #[test]
    fn clip_action_respects_box() {
        let spec = EnvSpec {
            env_id: "x".into(),
            state_dim: 1,
            action_dim: 2,
            action_low: vec![-1.0, 0.0],
            action_high: vec![1.0, 0.5],
            horizon: 10,
        };
        let mut a = vec![-3.0, 0.7];
        spec.clip_action(&mut a);
        assert_eq!(a, vec![-1.0, 0.5]);
    }
}
