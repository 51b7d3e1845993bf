//! Counterfactual generation: training a policy to produce alternative
//! trajectories that outperform observed ones while staying close to them.
//!
//! The generator is an off-policy agent trained on rollouts that restart
//! from the initial states of observed trajectories. Each rollout runs for
//! exactly the observed length; the transitions pushed into the replay
//! buffer carry true environment rewards except the last one, which is
//! shaped by subtracting `lambda` times the action distance to the observed
//! trajectory. The return the critic sees is therefore
//! `G(cf) - lambda * D(observed, cf)`: higher returns, penalized for
//! straying from what actually happened.

use serde::{Deserialize, Serialize};

use crate::env::{EnvState, Environment, InnerStep};
use crate::error::{Error, Result};
use crate::evalmetrics::{rho_adv, rho_plus, MethodEval};
use crate::seed::{stream_rng, substream};
use crate::td3::{Td3Agent, Transition};
use crate::trajectory::{action_distance, DistanceParams, Trajectory, TrajectoryMeta};
use rand::Rng;

/// Knobs of the counterfactual training and evaluation loops.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CfConfig {
    /// Distance-penalty weight applied to the terminal reward.
    pub lambda: f64,
    /// Outer iterations: how many observed trajectories are sampled.
    pub n_observed: usize,
    /// Counterfactual rollouts generated per sampled observed trajectory.
    pub n_cf: usize,
    /// Evaluate on the test set every this many interaction steps.
    pub eval_every: usize,
    /// Counterfactual rollouts per test trajectory during evaluation.
    pub eval_rollouts: usize,
    pub distance: DistanceParams,
}

impl Default for CfConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            n_observed: 500,
            n_cf: 5,
            eval_every: 400,
            eval_rollouts: 10,
            distance: DistanceParams::default(),
        }
    }
}

impl CfConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::InvalidValue(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.eval_rollouts == 0 {
            return Err(Error::InvalidValue("eval_rollouts must be >= 1".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::InvalidValue("eval_every must be >= 1".into()));
        }
        self.distance.validate()
    }
}

/// One generated counterfactual with its headline numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfResult {
    pub counterfactual: Trajectory,
    /// Action distance to the observed trajectory.
    pub distance: f64,
    /// Cumulative return of the counterfactual under TRUE env rewards.
    pub return_cf: f64,
    pub return_observed: f64,
    /// `return_cf > return_observed`.
    pub positive: bool,
}

/// Cut a long source rollout into fixed-length windows, each restartable
/// from its own initial simulator state.
///
/// Segments are `[j*stride, j*stride + window)` for every `j` with a full
/// window. A window longer than the source yields an empty list (with a
/// warning) rather than an error, so sweeping window sizes over mixed-length
/// sources degrades gracefully.
pub fn sliding_window_dataset(
    long: &Trajectory,
    window: usize,
    stride: usize,
) -> Result<Vec<Trajectory>> {
    if window == 0 || stride == 0 {
        return Err(Error::InvalidValue("window and stride must be >= 1".into()));
    }
    if window > long.len() {
        log::warn!("window {} exceeds trajectory length {}; no segments", window, long.len());
        return Ok(Vec::new());
    }
    let internals = long
        .meta()
        .step_internals
        .as_ref()
        .ok_or_else(|| Error::InvalidValue("source trajectory lacks per-step internals".into()))?;
    let mut out = Vec::new();
    let mut start = 0;
    while start + window <= long.len() {
        let steps = long.steps()[start..start + window].to_vec();
        let meta = TrajectoryMeta {
            initial_internal: Some(internals[start].clone()),
            step_internals: None,
            source_seed: long.meta().source_seed,
            window_start: Some(start),
            constrained_start: false,
        };
        out.push(Trajectory::new(steps, long.env_id(), meta)?);
        start += stride;
    }
    Ok(out)
}

/// Generate one counterfactual rollout of an observed trajectory.
///
/// The environment is restored to the observed initial state; if
/// `fresh_noise` is given, the noise stream is then reseeded so the rollout
/// sees a new realization instead of replaying the recorded one. The agent
/// picks an action at every surfaced state until exactly `observed.len()`
/// inner steps have elapsed (wrappers may interleave forced steps; absorbing
/// filler follows termination), keeping the action sequences aligned for
/// the distance.
///
/// Returned transitions are the surfaced (outer) steps with true rewards,
/// except the last, whose reward is shaped to `r - lambda * D`. The
/// `CfResult` always reports true-reward returns.
pub fn rollout_counterfactual(
    agent: &mut Td3Agent,
    env: &mut dyn Environment,
    observed: &Trajectory,
    cfg: &CfConfig,
    explore: bool,
    fresh_noise: Option<u64>,
) -> Result<(CfResult, Vec<Transition>)> {
    cfg.validate()?;
    if env.spec().env_id != observed.env_id() {
        return Err(Error::Env(format!(
            "observed trajectory is from '{}' but environment is '{}'",
            observed.env_id(),
            env.spec().env_id
        )));
    }
    if observed.action_dim() != env.spec().action_dim {
        return Err(Error::DimensionMismatch {
            expected: env.spec().action_dim,
            got: observed.action_dim(),
        });
    }
    let initial_internal = observed
        .meta()
        .initial_internal
        .clone()
        .ok_or_else(|| Error::InvalidValue("observed trajectory lacks initial_internal".into()))?;

    let n_steps = observed.len();
    env.set_inner_budget(n_steps);
    let initial = EnvState {
        observable: observed.initial_state().to_vec(),
        internal: initial_internal.clone(),
    };
    let mut state = env.reset_to(&initial)?;
    if let Some(seed) = fresh_noise {
        env.reseed_noise(seed);
    }
    let mut inner: Vec<InnerStep> = env.drain_inner();
    let constrained_start = !inner.is_empty();

    let mut transitions: Vec<Transition> = Vec::new();
    while inner.len() < n_steps {
        env.set_inner_budget(n_steps - inner.len());
        let action = agent.select_action(&state.observable, explore);
        let res = env.step(&action)?;
        let drained = env.drain_inner();
        if drained.is_empty() {
            // Plain environment (or absorbing filler): the outer step is its
            // own inner step.
            inner.push(InnerStep {
                state: state.clone(),
                action: action.clone(),
                reward: res.reward,
                done: res.done,
                forced: false,
            });
        } else {
            inner.extend(drained);
        }
        transitions.push(Transition {
            s: state.observable.clone(),
            a: action,
            r: res.reward,
            s_next: res.next_state.observable.clone(),
            done: res.done,
        });
        state = res.next_state;
    }
    if inner.len() != n_steps {
        return Err(Error::Env(format!(
            "rollout produced {} inner steps for an observed length of {}",
            inner.len(),
            n_steps
        )));
    }

    let meta = TrajectoryMeta {
        initial_internal: Some(initial_internal),
        step_internals: None,
        source_seed: fresh_noise,
        window_start: observed.meta().window_start,
        constrained_start,
    };
    let counterfactual = Trajectory::from_parts(
        inner.iter().map(|s| s.state.observable.clone()).collect(),
        inner.iter().map(|s| s.action.clone()).collect(),
        inner.iter().map(|s| s.reward).collect(),
        observed.env_id(),
        meta,
    )?;

    let distance =
        action_distance(&observed.action_seq(), &counterfactual.action_seq(), &cfg.distance)?;
    if let Some(last) = transitions.last_mut() {
        last.r -= cfg.lambda * distance;
    }
    let return_cf = counterfactual.cumulative_return();
    let return_observed = observed.cumulative_return();
    Ok((
        CfResult {
            counterfactual,
            distance,
            return_cf,
            return_observed,
            positive: return_cf > return_observed,
        },
        transitions,
    ))
}

/// One learning-curve entry, emitted every `eval_every` interaction steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub interaction_steps: usize,
    pub rho_plus: f64,
    /// None when no trajectory had a positive counterfactual from either
    /// method (undefined, written as null).
    pub rho_adv: Option<f64>,
    /// Mean distance of the best positive counterfactuals, if any.
    pub mean_distance: Option<f64>,
    /// Mean return gain (cf - observed) of the best positives, if any.
    pub mean_return_gain: Option<f64>,
}

impl CurveRow {
    pub const CSV_HEADER: &'static str =
        "interaction_steps,rho_plus,rho_adv,mean_distance,mean_return_gain";

    pub fn to_csv_line(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "null".to_string(), |x| x.to_string());
        format!(
            "{},{},{},{},{}",
            self.interaction_steps,
            self.rho_plus,
            opt(self.rho_adv),
            opt(self.mean_distance),
            opt(self.mean_return_gain)
        )
    }
}

/// Noise seed for evaluation rollout `k` of test trajectory `i` in
/// evaluation round `tag`. Derivation is part of the reproducibility
/// contract: reports must be byte-identical across reruns.
fn eval_noise(master: u64, tag: u64, traj: usize, rollout: usize) -> u64 {
    let round = substream(master, "cf-eval", tag);
    substream(round, "rollout", (traj as u64) << 20 | rollout as u64)
}

fn env_for<'a>(
    pool: &'a mut [Box<dyn Environment>],
    env_id: &str,
) -> Result<&'a mut Box<dyn Environment>> {
    pool.iter_mut()
        .find(|e| e.spec().env_id == env_id)
        .ok_or_else(|| Error::Env(format!("no environment with id '{env_id}' in pool")))
}

/// Evaluate a generator on a test set: `eval_rollouts` deterministic-policy
/// rollouts per trajectory (stochasticity only from fresh env noise), and
/// per trajectory the positive counterfactual with minimal distance, if any.
pub fn evaluate_cf(
    agent: &mut Td3Agent,
    pool: &mut [Box<dyn Environment>],
    test_set: &[Trajectory],
    cfg: &CfConfig,
    seed: u64,
    tag: u64,
) -> Result<MethodEval> {
    let mut best: Vec<Option<CfResult>> = Vec::with_capacity(test_set.len());
    for (i, observed) in test_set.iter().enumerate() {
        let env = env_for(pool, observed.env_id())?;
        let mut chosen: Option<CfResult> = None;
        for k in 0..cfg.eval_rollouts {
            let noise = eval_noise(seed, tag, i, k);
            let (res, _) = rollout_counterfactual(agent, env, observed, cfg, false, Some(noise))?;
            if res.positive && chosen.as_ref().is_none_or(|c| res.distance < c.distance) {
                chosen = Some(res);
            }
        }
        best.push(chosen);
    }
    Ok(MethodEval { best })
}

/// The naive baseline: evaluation rollouts of the trajectory-generating
/// policy itself (no counterfactual training, no constrained wrapper — pass
/// the plain environment pool). Positives, if any, come from env noise.
pub fn baseline_counterfactuals(
    baseline: &mut Td3Agent,
    pool: &mut [Box<dyn Environment>],
    test_set: &[Trajectory],
    cfg: &CfConfig,
    seed: u64,
) -> Result<MethodEval> {
    evaluate_cf(baseline, pool, test_set, cfg, seed, u64::MAX)
}

fn curve_row(
    agent: &mut Td3Agent,
    pool: &mut [Box<dyn Environment>],
    test_set: &[Trajectory],
    baseline_eval: &MethodEval,
    cfg: &CfConfig,
    seed: u64,
    tag: u64,
    interaction_steps: usize,
) -> Result<CurveRow> {
    let eval = evaluate_cf(agent, pool, test_set, cfg, seed, tag)?;
    let positives: Vec<&CfResult> = eval.best.iter().flatten().collect();
    let mean = |f: &dyn Fn(&CfResult) -> f64| {
        (!positives.is_empty())
            .then(|| positives.iter().map(|r| f(r)).sum::<f64>() / positives.len() as f64)
    };
    Ok(CurveRow {
        interaction_steps,
        rho_plus: rho_plus(&eval, test_set.len())?,
        rho_adv: rho_adv(&eval, baseline_eval)?.0,
        mean_distance: mean(&|r| r.distance),
        mean_return_gain: mean(&|r| r.return_cf - r.return_observed),
    })
}

/// Train a counterfactual generator over a dataset of observed trajectories.
///
/// Per outer iteration: sample one observed trajectory uniformly, generate
/// `n_cf` exploratory rollouts from its initial state (pushing all
/// transitions, terminal reward shaped, into the replay buffer), then run
/// one agent update. Every `eval_every` interaction steps the generator is
/// evaluated on `test_set` against the precomputed `baseline_eval` and a
/// learning-curve row is emitted (skipped when `test_set` is empty). Every
/// rollout counts its full aligned length as interaction steps.
pub fn train_cf(
    agent: &mut Td3Agent,
    pool: &mut [Box<dyn Environment>],
    train_set: &[Trajectory],
    test_set: &[Trajectory],
    baseline_eval: &MethodEval,
    cfg: &CfConfig,
    seed: u64,
    mut on_row: impl FnMut(&CurveRow),
) -> Result<Vec<CurveRow>> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::InvalidValue("empty training set".into()));
    }
    if baseline_eval.len() != test_set.len() {
        return Err(Error::LengthMismatch { left: baseline_eval.len(), right: test_set.len() });
    }
    let mut sample_rng = stream_rng(seed, "cf-sample", 0);
    let mut rows = Vec::new();
    let mut interaction_steps = 0usize;
    let mut next_eval = cfg.eval_every;
    for e in 0..cfg.n_observed {
        let observed = &train_set[sample_rng.random_range(0..train_set.len())];
        let env = env_for(pool, observed.env_id())?;
        for k in 0..cfg.n_cf {
            let noise = substream(seed, "cf-noise", (e * cfg.n_cf + k) as u64);
            let (_, transitions) =
                rollout_counterfactual(agent, env, observed, cfg, true, Some(noise))?;
            for t in transitions {
                agent.buffer.push(t);
            }
            interaction_steps += observed.len();
        }
        if agent.buffer.len() >= agent.hyper().warmup {
            let report = agent.update();
            if !report.skipped && !report.critic_loss.is_finite() {
                return Err(Error::Diverged(format!(
                    "critic loss {} at outer iteration {e}",
                    report.critic_loss
                )));
            }
        }
        if interaction_steps >= next_eval && !test_set.is_empty() {
            let tag = rows.len() as u64;
            let row = curve_row(
                agent,
                pool,
                test_set,
                baseline_eval,
                cfg,
                seed,
                tag,
                interaction_steps,
            )?;
            on_row(&row);
            rows.push(row);
            next_eval = cfg.eval_every * (interaction_steps / cfg.eval_every + 1);
        }
    }
    Ok(rows)
}
