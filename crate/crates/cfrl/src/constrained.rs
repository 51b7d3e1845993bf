//! Constrained-state wrapper: an augmented MDP whose surfaced state space
//! excludes a designated region.
//!
//! Some counterfactuals are only actionable if they respect a protocol in
//! part of the state space (a safety rule, a prescribed dose). The wrapper
//! realizes this as an environment transformation: whenever a base step
//! lands inside the constrained region, a predefined policy is applied
//! repeatedly until the state leaves the region, and the whole excursion is
//! surfaced to the agent as a single step whose reward is the sum of the
//! per-step rewards. Counterfactual training then runs unchanged on the
//! wrapped environment; the forced inner steps are logged so exported
//! trajectories and action distances still cover every base step.

use crate::env::{EnvSpec, EnvState, Environment, InnerStep, StepResult};
use crate::error::{Error, Result};
use crate::td3::Td3Agent;
use crate::trajectory::{ActionSeq, Trajectory};

/// Inclusive interval bound on one observable dimension.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DimBound {
    pub dim: usize,
    pub low: f64,
    pub high: f64,
}

/// The predefined policy applied inside the constrained region.
pub enum ConstraintPolicy {
    /// A constant action vector.
    Fixed(Vec<f64>),
    /// A frozen agent queried in deterministic mode.
    Baseline(Box<Td3Agent>),
}

impl std::fmt::Debug for ConstraintPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Fixed(a) => f.debug_tuple("Fixed").field(a).finish(),
            Self::Baseline(_) => f.write_str("Baseline(..)"),
        }
    }
}

/// Declaration of the constrained region and what happens inside it.
///
/// A state belongs to the region iff every listed bound holds (an empty list
/// therefore means "no constrained region"). Bounds are inclusive on both
/// sides; one-sided regions use `-inf`/`inf` for the open end.
#[derive(Debug)]
pub struct ConstraintSpec {
    pub bounds: Vec<DimBound>,
    pub policy: ConstraintPolicy,
    /// Cap on forced steps per excursion. `None` means "whatever the
    /// remaining episode budget allows".
    pub max_constrained_steps: Option<usize>,
}

impl ConstraintSpec {
    /// Check the declaration against the environment it will wrap.
    pub fn validate(&self, spec: &EnvSpec) -> Result<()> {
        for b in &self.bounds {
            if b.dim >= spec.state_dim {
                return Err(Error::InvalidValue(format!(
                    "constraint bound on dim {} but state_dim is {}",
                    b.dim, spec.state_dim
                )));
            }
            if b.low.is_nan() || b.high.is_nan() || b.low > b.high {
                return Err(Error::InvalidValue(format!(
                    "bad constraint interval [{}, {}]",
                    b.low, b.high
                )));
            }
        }
        if let ConstraintPolicy::Fixed(a) = &self.policy {
            if a.len() != spec.action_dim {
                return Err(Error::DimensionMismatch { expected: spec.action_dim, got: a.len() });
            }
            for ((x, l), h) in a.iter().zip(&spec.action_low).zip(&spec.action_high) {
                if !(x.is_finite() && *l <= *x && *x <= *h) {
                    return Err(Error::InvalidValue(format!(
                        "fixed constraint action {x} outside bounds [{l}, {h}]"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Is the observable inside the constrained region?
    pub fn contains(&self, observable: &[f64]) -> bool {
        !self.bounds.is_empty()
            && self.bounds.iter().all(|b| {
                let x = observable[b.dim];
                b.low <= x && x <= b.high
            })
    }

    fn action_for(&mut self, observable: &[f64]) -> Vec<f64> {
        match &mut self.policy {
            ConstraintPolicy::Fixed(a) => a.clone(),
            ConstraintPolicy::Baseline(agent) => agent.select_action(observable, false),
        }
    }
}

/// An environment whose surfaced states never lie in the constrained region.
///
/// The wrapper keeps the inner environment's id and spec, so datasets
/// recorded on the plain environment restore and replay through the wrapper
/// unchanged. Inner steps (agent-chosen and forced alike) are logged and
/// retrievable via [`Environment::drain_inner`].
pub struct AugmentedEnv {
    inner: Box<dyn Environment>,
    constraint: ConstraintSpec,
    spec: EnvSpec,
    current: EnvState,
    log: Vec<InnerStep>,
    inner_steps: usize,
    budget: Option<usize>,
    done: bool,
    truncated: bool,
    prelude_ran: bool,
}

impl AugmentedEnv {
    pub fn new(inner: Box<dyn Environment>, constraint: ConstraintSpec) -> Result<Self> {
        let spec = inner.spec().clone();
        constraint.validate(&spec)?;
        Ok(Self {
            inner,
            constraint,
            spec,
            current: EnvState { observable: Vec::new(), internal: Vec::new() },
            log: Vec::new(),
            inner_steps: 0,
            budget: None,
            done: false,
            truncated: false,
            prelude_ran: false,
        })
    }

    /// The last excursion (or prelude) hit its step cap and truncated the
    /// episode.
    pub fn truncated(&self) -> bool {
        self.truncated
    }

    /// The most recent reset landed inside the constrained region, so the
    /// predefined policy ran before the first state was surfaced.
    pub fn prelude_ran(&self) -> bool {
        self.prelude_ran
    }

    /// Inner steps still allowed: the episode budget set by the caller (if
    /// any, counted down as steps occur) intersected with the inner horizon.
    fn remaining(&self) -> usize {
        let horizon_left = self.spec.horizon.saturating_sub(self.inner_steps);
        self.budget.map_or(horizon_left, |b| b.min(horizon_left))
    }

    fn note_inner_step(&mut self) {
        self.inner_steps += 1;
        if let Some(b) = &mut self.budget {
            *b = b.saturating_sub(1);
        }
    }

    /// Apply the predefined policy until the current state leaves the
    /// region, the inner environment terminates, or a cap is hit (which
    /// truncates the episode). Returns the summed reward of forced steps.
    fn force_until_clear(&mut self) -> Result<f64> {
        let cap = self.constraint.max_constrained_steps.unwrap_or(usize::MAX).min(self.remaining());
        let mut total = 0.0;
        let mut forced = 0;
        while !self.done && self.constraint.contains(&self.current.observable) {
            if forced == cap {
                self.truncated = true;
                self.done = true;
                break;
            }
            let action = self.constraint.action_for(&self.current.observable);
            let res = self.inner.step(&action)?;
            self.log.push(InnerStep {
                state: self.current.clone(),
                action,
                reward: res.reward,
                done: res.done,
                forced: true,
            });
            total += res.reward;
            self.note_inner_step();
            forced += 1;
            self.done = res.done;
            self.current = res.next_state;
        }
        Ok(total)
    }

    fn begin_episode(&mut self, state: EnvState) -> Result<EnvState> {
        self.current = state;
        self.log.clear();
        self.inner_steps = 0;
        self.done = false;
        self.truncated = false;
        self.force_until_clear()?;
        self.prelude_ran = !self.log.is_empty();
        Ok(self.current.clone())
    }
}

impl Environment for AugmentedEnv {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> EnvState {
        self.budget = None;
        let state = self.inner.reset(seed);
        // A fresh reset cannot fail: force_until_clear only errors on inner
        // step faults, which the bundled simulators never produce for
        // in-bounds policy actions.
        self.begin_episode(state).expect("prelude step failed on reset")
    }

    fn reset_to(&mut self, state: &EnvState) -> Result<EnvState> {
        let restored = self.inner.reset_to(state)?;
        self.begin_episode(restored)
    }

    fn reseed_noise(&mut self, seed: u64) {
        self.inner.reseed_noise(seed);
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        if self.done || self.remaining() == 0 {
            // Absorbing: nothing is logged, so callers synthesize the filler
            // step exactly as they do for plain environments.
            self.done = true;
            return Ok(StepResult { next_state: self.current.clone(), reward: 0.0, done: true });
        }
        let res = self.inner.step(action)?;
        self.log.push(InnerStep {
            state: self.current.clone(),
            action: action.to_vec(),
            reward: res.reward,
            done: res.done,
            forced: false,
        });
        self.note_inner_step();
        self.done = res.done;
        self.current = res.next_state;
        let excursion = self.force_until_clear()?;
        Ok(StepResult {
            next_state: self.current.clone(),
            reward: res.reward + excursion,
            done: self.done,
        })
    }

    fn drain_inner(&mut self) -> Vec<InnerStep> {
        std::mem::take(&mut self.log)
    }

    fn set_inner_budget(&mut self, budget: usize) {
        self.budget = Some(budget);
    }
}

/// Align an augmented rollout's full inner action sequence with the observed
/// one for distance computation. Both trajectories must already be at inner
/// resolution (the counterfactual rollout produces this directly).
pub fn flatten_for_distance(
    observed: &Trajectory,
    counterfactual: &Trajectory,
) -> Result<(ActionSeq, ActionSeq)> {
    if observed.len() != counterfactual.len() {
        return Err(Error::LengthMismatch {
            left: observed.len(),
            right: counterfactual.len(),
        });
    }
    Ok((observed.action_seq(), counterfactual.action_seq()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{GlucoseEnv, GlucoseParams, PointMassEnv, PointMassParams};

    fn plain_pointmass() -> PointMassEnv {
        PointMassEnv::new(PointMassParams::default()).unwrap()
    }

    fn boxed_pointmass() -> Box<dyn Environment> {
        Box::new(plain_pointmass())
    }

    fn no_region() -> ConstraintSpec {
        ConstraintSpec { bounds: Vec::new(), policy: ConstraintPolicy::Fixed(vec![0.0]), max_constrained_steps: None }
    }

    /// Position band [0.25, 0.6]; braking hard pushes the mass back out.
    fn band_region(cap: Option<usize>) -> ConstraintSpec {
        ConstraintSpec {
            bounds: vec![DimBound { dim: 0, low: 0.25, high: 0.6 }],
            policy: ConstraintPolicy::Fixed(vec![-1.0]),
            max_constrained_steps: cap,
        }
    }

    #[test]
    fn spec_validation() {
        let env_spec = plain_pointmass().spec().clone();
        assert!(no_region().validate(&env_spec).is_ok());
        let bad_dim = ConstraintSpec {
            bounds: vec![DimBound { dim: 9, low: 0.0, high: 1.0 }],
            policy: ConstraintPolicy::Fixed(vec![0.0]),
            max_constrained_steps: None,
        };
        assert!(bad_dim.validate(&env_spec).is_err());
        let bad_interval = ConstraintSpec {
            bounds: vec![DimBound { dim: 0, low: 1.0, high: 0.0 }],
            policy: ConstraintPolicy::Fixed(vec![0.0]),
            max_constrained_steps: None,
        };
        assert!(bad_interval.validate(&env_spec).is_err());
        let bad_action = ConstraintSpec {
            bounds: Vec::new(),
            policy: ConstraintPolicy::Fixed(vec![7.0]),
            max_constrained_steps: None,
        };
        assert!(bad_action.validate(&env_spec).is_err());
    }

    #[test]
    fn membership_is_inclusive_conjunction() {
        let spec = ConstraintSpec {
            bounds: vec![
                DimBound { dim: 0, low: 0.0, high: 1.0 },
                DimBound { dim: 1, low: f64::NEG_INFINITY, high: 0.5 },
            ],
            policy: ConstraintPolicy::Fixed(vec![0.0]),
            max_constrained_steps: None,
        };
        assert!(spec.contains(&[0.0, 0.5])); // both boundaries inclusive
        assert!(spec.contains(&[1.0, -100.0]));
        assert!(!spec.contains(&[1.1, 0.0])); // dim 0 out
        assert!(!spec.contains(&[0.5, 0.6])); // dim 1 out
        assert!(!no_region().contains(&[0.0, 0.0])); // empty list: no region
    }

    #[test]
    fn transparent_when_region_is_empty() {
        let mut plain = plain_pointmass();
        let mut wrapped = AugmentedEnv::new(boxed_pointmass(), no_region()).unwrap();
        let a = plain.reset(42);
        let b = wrapped.reset(42);
        assert_eq!(a, b);
        for i in 0..40 {
            let action = [((i as f64) * 0.7).sin()];
            let ra = plain.step(&action).unwrap();
            let rb = wrapped.step(&action).unwrap();
            assert_eq!(ra, rb, "diverged at step {i}");
        }
        let log = wrapped.drain_inner();
        assert_eq!(log.len(), 40);
        assert!(log.iter().all(|s| !s.forced));
    }

    #[test]
    fn excursion_forces_until_clear_and_sums_rewards() {
        // Start at rest near the band and accelerate into it; the wrapper
        // must brake (-1) until the position leaves [0.25, 0.6].
        let mut env = AugmentedEnv::new(boxed_pointmass(), band_region(None)).unwrap();
        let start = env.reset(7);
        assert!(start.observable[0] < 0.25 || start.observable[0] > 0.6);
        env.drain_inner(); // discard any prelude entries
        let mut res = None;
        for _ in 0..40 {
            let r = env.step(&[1.0]).unwrap();
            let log_now = env.drain_inner();
            if log_now.iter().any(|s| s.forced) {
                res = Some((r, log_now));
                break;
            }
            if r.done {
                break;
            }
        }
        let (r, log) = res.expect("never entered the band");
        // Surfaced state is out of the region.
        assert!(!band_region(None).contains(&r.next_state.observable));
        // Forced steps all carry the constraint action.
        let forced: Vec<_> = log.iter().filter(|s| s.forced).collect();
        assert!(!forced.is_empty());
        for s in &forced {
            assert_eq!(s.action, vec![-1.0]);
            assert!(band_region(None).contains(&s.state.observable));
        }
        // Reward conservation: surfaced reward equals the sum over the log.
        let sum: f64 = log.iter().map(|s| s.reward).sum();
        assert!((r.reward - sum).abs() < 1e-12);
    }

    #[test]
    fn cap_truncates_episode() {
        // Zero-action constraint policy in a wide band the mass cannot leave
        // fast: the cap fires and the episode truncates.
        let spec = ConstraintSpec {
            bounds: vec![DimBound { dim: 0, low: -5.0, high: 5.0 }],
            policy: ConstraintPolicy::Fixed(vec![0.0]),
            max_constrained_steps: Some(3),
        };
        let mut env = AugmentedEnv::new(boxed_pointmass(), spec).unwrap();
        // reset lands inside the band (start positions are within ±0.5):
        // the prelude runs 3 forced steps and truncates immediately.
        env.reset(3);
        assert!(env.prelude_ran());
        assert!(env.truncated());
        let log = env.drain_inner();
        assert_eq!(log.iter().filter(|s| s.forced).count(), 3);
        // Subsequent steps absorb.
        let r = env.step(&[1.0]).unwrap();
        assert!(r.done);
        assert_eq!(r.reward, 0.0);
    }

    #[test]
    fn inner_budget_bounds_total_inner_steps() {
        let mut env = AugmentedEnv::new(boxed_pointmass(), band_region(None)).unwrap();
        env.set_inner_budget(6);
        env.reset_to(&plain_pointmass().reset(7)).unwrap();
        let mut total = env.drain_inner().len();
        for _ in 0..10 {
            env.set_inner_budget(6 - total);
            let r = env.step(&[1.0]).unwrap();
            total += env.drain_inner().len();
            assert!(total <= 6, "budget overshot: {total}");
            if r.done {
                break;
            }
        }
        assert_eq!(total, 6, "budgeted rollout should fill exactly 6 inner steps");
    }

    #[test]
    fn glucose_low_reading_prelude_applies_protocol_dose() {
        // Drive glucose below 100 mg/dL (scaled observable < -0.2) with max
        // insulin, then restore that state under a wrapper that forces a
        // 0.03-unit dose until the reading recovers to 100.
        let params = GlucoseParams::default();
        let mut plain = GlucoseEnv::new(params.clone()).unwrap();
        plain.reset(11);
        let mut low = None;
        for _ in 0..150 {
            let r = plain.step(&[0.5]).unwrap();
            if r.next_state.observable[0] < -0.2 {
                low = Some(r.next_state);
                break;
            }
            if r.done {
                break;
            }
        }
        let low = low.expect("max insulin never drove the reading below 100");

        let spec = ConstraintSpec {
            bounds: vec![DimBound { dim: 0, low: f64::NEG_INFINITY, high: -0.2 }],
            policy: ConstraintPolicy::Fixed(vec![0.03]),
            max_constrained_steps: None,
        };
        let mut wrapped =
            AugmentedEnv::new(Box::new(GlucoseEnv::new(params).unwrap()), spec).unwrap();
        let surfaced = wrapped.reset_to(&low).unwrap();
        assert!(wrapped.prelude_ran());
        assert!(surfaced.observable[0] >= -0.2, "surfaced reading still below 100");
        let log = wrapped.drain_inner();
        assert!(!log.is_empty());
        for s in &log {
            assert!(s.forced);
            assert_eq!(s.action, vec![0.03]);
            assert!(s.state.observable[0] < -0.2 + 1e-12);
        }
    }

    #[test]
    fn baseline_policy_variant_queries_agent_deterministically() {
        use crate::td3::{Td3Agent, Td3Hyper};
        let env_spec = plain_pointmass().spec().clone();
        let hyper = Td3Hyper { hidden: vec![8, 8], ..Td3Hyper::default() };
        let inside = Td3Agent::new(&env_spec, hyper.clone(), 5).unwrap();
        let mut reference = Td3Agent::new(&env_spec, hyper, 5).unwrap();

        let spec = ConstraintSpec {
            bounds: vec![DimBound { dim: 0, low: 0.25, high: 0.6 }],
            policy: ConstraintPolicy::Baseline(Box::new(inside)),
            max_constrained_steps: None,
        };
        let mut env = AugmentedEnv::new(boxed_pointmass(), spec).unwrap();
        env.reset(7);
        for _ in 0..40 {
            let r = env.step(&[1.0]).unwrap();
            let log = env.drain_inner();
            let forced: Vec<_> = log.iter().filter(|s| s.forced).collect();
            if !forced.is_empty() {
                for s in &forced {
                    let expect = reference.select_action(&s.state.observable, false);
                    assert_eq!(s.action, expect);
                }
                return;
            }
            if r.done {
                break;
            }
        }
        panic!("never entered the band");
    }

    #[test]
    fn flatten_requires_aligned_lengths() {
        use crate::trajectory::{Step, TrajectoryMeta};
        let step = |i: usize| Step { state: vec![i as f64], action: vec![0.1], reward: 0.0 };
        let t3 = Trajectory::new((0..3).map(step).collect(), "x", TrajectoryMeta::default()).unwrap();
        let t4 = Trajectory::new((0..4).map(step).collect(), "x", TrajectoryMeta::default()).unwrap();
        assert!(flatten_for_distance(&t3, &t4).is_err());
        let (a, b) = flatten_for_distance(&t3, &t3).unwrap();
        assert_eq!(a.len(), 3);
        assert_eq!(b.len(), 3);
    }
}
