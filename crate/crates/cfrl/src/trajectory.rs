//! Trajectories and the action-sequence distance metric.
//!
//! A trajectory is an ordered list of `(state, action, reward)` steps over a
//! finite horizon. The distance between two aligned action sequences is
//!
//! ```text
//! D(a, b) = sum_i ||a_i - b_i||_p / (||a_i||_p + delta)
//! ```
//!
//! It is directed: the denominator normalizes by the magnitude of the *first*
//! sequence, which by convention is always the observed one.

use serde::{Deserialize, Serialize};

use crate::error::{io_at, Error, Result};

/// One `(state, action, reward)` step of a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
}

/// Optional per-trajectory annotations carried through dataset files.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryMeta {
    /// Full simulator state at step 0, for exact restarts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_internal: Option<Vec<f64>>,
    /// Simulator state at every step of this trajectory (long source
    /// rollouts only; windows carry just `initial_internal`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_internals: Option<Vec<Vec<f64>>>,
    /// Seed of the source episode this trajectory was recorded from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_seed: Option<u64>,
    /// Step offset within the source episode (sliding-window segments).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_start: Option<usize>,
    /// Initial surfaced state lay inside the constrained set S^c.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub constrained_start: bool,
}

/// An observed or generated rollout: `n + 1` steps plus provenance.
///
/// Immutable after construction; all invariants are checked by [`Trajectory::new`]
/// and again when deserializing from JSONL.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    steps: Vec<Step>,
    env_id: String,
    meta: TrajectoryMeta,
}

impl Trajectory {
    /// Build a trajectory, validating shape invariants: non-empty, consistent
    /// state/action dimensions, all values finite.
    pub fn new(steps: Vec<Step>, env_id: impl Into<String>, meta: TrajectoryMeta) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::EmptyTrajectory);
        }
        let state_dim = steps[0].state.len();
        let action_dim = steps[0].action.len();
        for step in &steps {
            if step.state.len() != state_dim {
                return Err(Error::DimensionMismatch {
                    expected: state_dim,
                    got: step.state.len(),
                });
            }
            if step.action.len() != action_dim {
                return Err(Error::DimensionMismatch {
                    expected: action_dim,
                    got: step.action.len(),
                });
            }
            let finite = step.state.iter().chain(step.action.iter()).all(|v| v.is_finite())
                && step.reward.is_finite();
            if !finite {
                return Err(Error::InvalidValue("non-finite value in trajectory".into()));
            }
        }
        if let Some(internals) = &meta.step_internals {
            if internals.len() != steps.len() {
                return Err(Error::LengthMismatch {
                    left: internals.len(),
                    right: steps.len(),
                });
            }
        }
        Ok(Self { steps, env_id: env_id.into(), meta })
    }

    pub fn from_parts(
        states: Vec<Vec<f64>>,
        actions: Vec<Vec<f64>>,
        rewards: Vec<f64>,
        env_id: impl Into<String>,
        meta: TrajectoryMeta,
    ) -> Result<Self> {
        if states.len() != actions.len() || states.len() != rewards.len() {
            return Err(Error::LengthMismatch {
                left: states.len(),
                right: actions.len().max(rewards.len()),
            });
        }
        let steps = states
            .into_iter()
            .zip(actions)
            .zip(rewards)
            .map(|((state, action), reward)| Step { state, action, reward })
            .collect();
        Self::new(steps, env_id, meta)
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    /// Number of steps.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        false // invariant: at least one step
    }

    pub fn env_id(&self) -> &str {
        &self.env_id
    }

    pub fn meta(&self) -> &TrajectoryMeta {
        &self.meta
    }

    pub fn state_dim(&self) -> usize {
        self.steps[0].state.len()
    }

    pub fn action_dim(&self) -> usize {
        self.steps[0].action.len()
    }

    /// State of step 0.
    pub fn initial_state(&self) -> &[f64] {
        &self.steps[0].state
    }

    /// Cumulative return: the sum of all per-step rewards, recomputed on
    /// every call so it can never go stale.
    pub fn cumulative_return(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    /// Extract the action sequence.
    pub fn action_seq(&self) -> ActionSeq {
        ActionSeq {
            actions: self.steps.iter().map(|s| s.action.clone()).collect(),
        }
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.reward).collect()
    }

    /// Serialize as one JSON line (no trailing newline).
    pub fn to_json_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// Parse one JSON line, validating all invariants.
    pub fn from_json_line(line: &str) -> Result<Self> {
        Ok(serde_json::from_str(line)?)
    }
}

/// Wire format: one trajectory per JSON line.
#[derive(Serialize, Deserialize)]
struct TrajectoryRecord {
    states: Vec<Vec<f64>>,
    actions: Vec<Vec<f64>>,
    rewards: Vec<f64>,
    env_id: String,
    #[serde(default)]
    meta: TrajectoryMeta,
}

// Serde goes through the wire format so embedding a trajectory in a larger
// record (counterfactual exports) matches the standalone JSONL layout, and
// deserialization re-validates the invariants.
impl Serialize for Trajectory {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let record = TrajectoryRecord {
            states: self.steps.iter().map(|s| s.state.clone()).collect(),
            actions: self.steps.iter().map(|s| s.action.clone()).collect(),
            rewards: self.rewards(),
            env_id: self.env_id.clone(),
            meta: self.meta.clone(),
        };
        record.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Trajectory {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let record = TrajectoryRecord::deserialize(deserializer)?;
        Self::from_parts(record.states, record.actions, record.rewards, record.env_id, record.meta)
            .map_err(serde::de::Error::custom)
    }
}

/// Write a dataset as JSON lines.
pub fn write_jsonl(trajectories: &[Trajectory], path: &std::path::Path) -> Result<()> {
    use std::io::Write;
    let mut file = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| io_at(path, e))?);
    for traj in trajectories {
        writeln!(file, "{}", traj.to_json_line()?)?;
    }
    Ok(())
}

/// Read a dataset from JSON lines, validating every trajectory.
pub fn read_jsonl(path: &std::path::Path) -> Result<Vec<Trajectory>> {
    let text = std::fs::read_to_string(path).map_err(|e| io_at(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(Trajectory::from_json_line)
        .collect()
}

/// An action sequence extracted from a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSeq {
    actions: Vec<Vec<f64>>,
}

impl ActionSeq {
    pub fn new(actions: Vec<Vec<f64>>) -> Self {
        Self { actions }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn actions(&self) -> &[Vec<f64>] {
        &self.actions
    }
}

/// Parameters of the action-sequence distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistanceParams {
    /// Stability term added to the denominator; must be positive.
    pub delta: f64,
    /// Order of the per-step norm for multi-dimensional actions.
    pub p_norm: u32,
}

impl Default for DistanceParams {
    fn default() -> Self {
        // l1 matches the scalar form exactly when the action dimension is 1.
        Self { delta: 1e-3, p_norm: 1 }
    }
}

impl DistanceParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) || !self.delta.is_finite() {
            return Err(Error::InvalidValue(format!("delta must be positive, got {}", self.delta)));
        }
        if self.p_norm < 1 {
            return Err(Error::InvalidValue("p_norm must be >= 1".into()));
        }
        Ok(())
    }
}

fn lp_norm(v: &[f64], p: u32) -> f64 {
    match p {
        1 => v.iter().map(|x| x.abs()).sum(),
        2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
        p => {
            let p = f64::from(p);
            v.iter().map(|x| x.abs().powf(p)).sum::<f64>().powf(1.0 / p)
        }
    }
}

/// Directed distance between aligned action sequences:
/// `sum_i ||a_i - b_i||_p / (||a_i||_p + delta)`.
///
/// `a` must be the observed sequence; swapping arguments changes the result.
pub fn action_distance(a: &ActionSeq, b: &ActionSeq, params: &DistanceParams) -> Result<f64> {
    params.validate()?;
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
    }
    let mut total = 0.0;
    for (ai, bi) in a.actions.iter().zip(&b.actions) {
        if ai.len() != bi.len() {
            return Err(Error::DimensionMismatch { expected: ai.len(), got: bi.len() });
        }
        let diff: Vec<f64> = ai.iter().zip(bi).map(|(x, y)| x - y).collect();
        total += lp_norm(&diff, params.p_norm) / (lp_norm(ai, params.p_norm) + params.delta);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn traj_with_rewards(rewards: &[f64]) -> Result<Trajectory> {
        let steps = rewards
            .iter()
            .map(|&r| Step { state: vec![0.0], action: vec![0.0], reward: r })
            .collect();
        Trajectory::new(steps, "test", TrajectoryMeta::default())
    }

    #[test]
    fn cumulative_return_sums_rewards() {
        let t = traj_with_rewards(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(t.cumulative_return(), 6.0);
    }

    #[test]
    fn empty_trajectory_rejected() {
        assert!(matches!(traj_with_rewards(&[]), Err(Error::EmptyTrajectory)));
    }

    #[test]
    fn distance_zero_for_identical_sequences() {
        let a = ActionSeq::new(vec![vec![1.0], vec![2.0]]);
        let b = a.clone();
        let p = DistanceParams { delta: 0.01, p_norm: 1 };
        assert_eq!(action_distance(&a, &b, &p).unwrap(), 0.0);
    }

    #[test]
    fn distance_hand_arithmetic() {
        // 0.5/1.01 + 1.0/2.01, term by term
        let a = ActionSeq::new(vec![vec![1.0], vec![2.0]]);
        let b = ActionSeq::new(vec![vec![1.5], vec![1.0]]);
        let p = DistanceParams { delta: 0.01, p_norm: 1 };
        let expected = 0.5 / 1.01 + 1.0 / 2.01;
        assert!((action_distance(&a, &b, &p).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.992_561).abs() < 1e-6);
    }

    #[test]
    fn distance_zero_magnitude_action() {
        let a = ActionSeq::new(vec![vec![0.0]]);
        let b = ActionSeq::new(vec![vec![0.3]]);
        let p = DistanceParams { delta: 0.1, p_norm: 1 };
        assert!((action_distance(&a, &b, &p).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn distance_length_mismatch_rejected() {
        let a = ActionSeq::new(vec![vec![1.0]]);
        let b = ActionSeq::new(vec![vec![1.0], vec![2.0]]);
        let p = DistanceParams::default();
        assert!(matches!(action_distance(&a, &b, &p), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn distance_dimension_mismatch_rejected() {
        let a = ActionSeq::new(vec![vec![1.0, 2.0]]);
        let b = ActionSeq::new(vec![vec![1.0]]);
        let p = DistanceParams::default();
        assert!(matches!(action_distance(&a, &b, &p), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn distance_is_directed() {
        // Denominator uses the first argument's magnitudes only.
        let a = ActionSeq::new(vec![vec![1.0]]);
        let b = ActionSeq::new(vec![vec![3.0]]);
        let p = DistanceParams { delta: 0.5, p_norm: 1 };
        let d_ab = action_distance(&a, &b, &p).unwrap();
        let d_ba = action_distance(&b, &a, &p).unwrap();
        assert!((d_ab - 2.0 / 1.5).abs() < 1e-12);
        assert!((d_ba - 2.0 / 3.5).abs() < 1e-12);
        assert_ne!(d_ab, d_ba);
    }

    #[test]
    fn jsonl_round_trip() {
        let t = Trajectory::from_parts(
            vec![vec![1.0, 2.0], vec![3.0, 4.0]],
            vec![vec![0.5], vec![-0.5]],
            vec![1.0, -1.0],
            "pointmass",
            TrajectoryMeta {
                initial_internal: Some(vec![1.0, 2.0, 0.0]),
                window_start: Some(3),
                ..TrajectoryMeta::default()
            },
        )
        .unwrap();
        let line = t.to_json_line().unwrap();
        let back = Trajectory::from_json_line(&line).unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn jsonl_rejects_mismatched_lengths() {
        let line = r#"{"states":[[0.0],[1.0]],"actions":[[0.0]],"rewards":[0.0,0.0],"env_id":"x","meta":{}}"#;
        assert!(Trajectory::from_json_line(line).is_err());
    }

    #[test]
    fn jsonl_rejects_non_finite() {
        let line = r#"{"states":[[0.0]],"actions":[[null]],"rewards":[0.0],"env_id":"x","meta":{}}"#;
        assert!(Trajectory::from_json_line(line).is_err());
    }

    proptest! {
        #[test]
        fn distance_non_negative_and_zero_iff_equal(
            pairs in proptest::collection::vec(
                (proptest::collection::vec(-10.0f64..10.0, 2),
                 proptest::collection::vec(-10.0f64..10.0, 2)),
                1..12,
            ),
            delta in 1e-4f64..1.0,
        ) {
            let a = ActionSeq::new(pairs.iter().map(|(x, _)| x.clone()).collect());
            let b = ActionSeq::new(pairs.iter().map(|(_, y)| y.clone()).collect());
            let p = DistanceParams { delta, p_norm: 1 };
            let d = action_distance(&a, &b, &p).unwrap();
            prop_assert!(d >= 0.0);
            let equal = a.actions() == b.actions();
            prop_assert_eq!(d == 0.0, equal);
        }

        #[test]
        fn distance_monotone_in_single_coordinate(
            base in proptest::collection::vec(-5.0f64..5.0, 3),
            other in proptest::collection::vec(-5.0f64..5.0, 3),
            bump in 0.01f64..2.0,
        ) {
            // Increasing |a_i - b_i| in one coordinate strictly increases D.
            let a = ActionSeq::new(vec![base.clone()]);
            let b0 = ActionSeq::new(vec![other.clone()]);
            let mut worse = other.clone();
            let gap = base[0] - other[0];
            worse[0] -= gap.signum() * bump; // move further from a in coord 0
            if gap == 0.0 {
                worse[0] += bump;
            }
            let b1 = ActionSeq::new(vec![worse]);
            let p = DistanceParams { delta: 0.01, p_norm: 1 };
            let d0 = action_distance(&a, &b0, &p).unwrap();
            let d1 = action_distance(&a, &b1, &p).unwrap();
            prop_assert!(d1 > d0);
        }

        #[test]
        fn doubling_delta_never_increases_distance(
            xs in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..10),
            delta in 1e-4f64..1.0,
        ) {
            let a = ActionSeq::new(xs.iter().map(|(x, _)| vec![*x]).collect());
            let b = ActionSeq::new(xs.iter().map(|(_, y)| vec![*y]).collect());
            let p1 = DistanceParams { delta, p_norm: 1 };
            let p2 = DistanceParams { delta: 2.0 * delta, p_norm: 1 };
            let d1 = action_distance(&a, &b, &p1).unwrap();
            let d2 = action_distance(&a, &b, &p2).unwrap();
            prop_assert!(d2 <= d1);
        }
    }
}
