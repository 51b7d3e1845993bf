//! Experiment orchestration: the five CLI commands as library functions.
//!
//! Each trial (one master seed) owns a subdirectory of the configured
//! output directory and produces, in order: a baseline checkpoint and loss
//! log, an observed-trajectory dataset, a counterfactual generator
//! checkpoint with its learning curve, and a metrics report with a
//! plot-ready export of the best counterfactuals. All artifacts are
//! byte-deterministic given the same config and seed; wall-clock timings go
//! only to a `run.log` sidecar, which is the one file excluded from that
//! guarantee.
//!
//! Randomness flows from the trial's master seed through named sub-streams
//! (baseline training, dataset env seeds, dataset split, agent init,
//! counterfactual training, evaluation noise), so no stage perturbs another
//! stage's draws.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cfgen::{
    baseline_counterfactuals, evaluate_cf, sliding_window_dataset, train_cf, CurveRow,
};
use crate::config::{PolicyBlock, RunConfig};
use crate::constrained::{AugmentedEnv, ConstraintPolicy, ConstraintSpec};
use crate::env::{EnvScheduler, Environment};
use crate::error::{io_at, Error, Result};
use crate::evalmetrics::{MethodEval, MetricsReport};
use crate::seed::substream;
use crate::td3::{evaluate_policy, train_baseline, LossRow, Td3Agent};
use crate::trajectory::{read_jsonl, write_jsonl, Step, Trajectory, TrajectoryMeta};

/// Evaluation-noise tag for the final report, distinct from the tags used
/// by learning-curve evaluations (row indices) and the baseline (u64::MAX).
const FINAL_EVAL_TAG: u64 = 1 << 32;

/// Canonical artifact locations for one trial.
#[derive(Debug, Clone)]
pub struct TrialPaths {
    pub dir: PathBuf,
    pub config_echo: PathBuf,
    pub baseline_ckpt: PathBuf,
    pub baseline_loss: PathBuf,
    pub baseline_summary: PathBuf,
    pub train_set: PathBuf,
    pub test_set: PathBuf,
    pub cf_ckpt: PathBuf,
    pub curve_csv: PathBuf,
    pub metrics_json: PathBuf,
    pub plot_csv: PathBuf,
    pub run_log: PathBuf,
}

impl TrialPaths {
    pub fn new(root: &Path, seed: u64) -> Self {
        let dir = root.join(format!("seed-{seed}"));
        Self {
            config_echo: dir.join("config.toml"),
            baseline_ckpt: dir.join("baseline.json"),
            baseline_loss: dir.join("baseline_loss.csv"),
            baseline_summary: dir.join("baseline_summary.json"),
            train_set: dir.join("dataset_train.jsonl"),
            test_set: dir.join("dataset_test.jsonl"),
            cf_ckpt: dir.join("cf.json"),
            curve_csv: dir.join("learning_curve.csv"),
            metrics_json: dir.join("metrics.json"),
            plot_csv: dir.join("plot_best_cf.csv"),
            run_log: dir.join("run.log"),
            dir,
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| io_at(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| io_at(path, e))?;
    Ok(())
}

/// Append a timestamped line to the sidecar log (timestamps live only
/// here, keeping every other artifact byte-deterministic).
fn log_sidecar(path: &Path, message: &str) {
    let stamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let line = format!("[t={stamp}] {message}\n");
    let write = || -> std::io::Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        f.write_all(line.as_bytes())
    };
    if let Err(e) = write() {
        log::warn!("cannot write sidecar log {}: {e}", path.display());
    }
    log::info!("{message}");
}

fn echo_config(cfg: &RunConfig, path: &Path) -> Result<()> {
    write_file(path, &cfg.to_toml()?)
}

/// Train the baseline policy: scheduler-rotated TD3 over the configured
/// pool. Writes the checkpoint, a loss CSV, and a summary with the trained
/// policy's mean evaluation return per environment.
///
/// The baseline is canonical TD3 — one gradient iteration per environment
/// step — regardless of the `td3.gradient_steps` setting, which applies to
/// counterfactual training only.
pub fn run_train_baseline(cfg: &RunConfig, seed: u64, paths: &TrialPaths) -> Result<()> {
    echo_config(cfg, &paths.config_echo)?;
    log_sidecar(&paths.run_log, &format!("train-baseline start (seed {seed})"));
    let started = std::time::Instant::now();

    let mut hyper = cfg.td3.clone();
    hyper.gradient_steps = 1;
    let mut sched = EnvScheduler::new(cfg.build_pool()?, cfg.env.steps_per_round)?;
    let mut loss_csv = String::from("step,critic_loss,actor_loss\n");
    let agent = train_baseline(
        &mut sched,
        hyper,
        substream(seed, "baseline-train", 0),
        cfg.baseline.total_steps,
        |row: LossRow| {
            let actor = row.actor_loss.map_or_else(|| "null".into(), |v: f64| v.to_string());
            loss_csv.push_str(&format!("{},{},{}\n", row.step, row.critic_loss, actor));
        },
    )?;
    agent.save(&paths.baseline_ckpt)?;
    write_file(&paths.baseline_loss, &loss_csv)?;

    // Post-training evaluation, one entry per environment variant.
    let mut agent = Td3Agent::load(&paths.baseline_ckpt, substream(seed, "baseline-eval", 0))?;
    let mut returns = Vec::new();
    for env in cfg.build_pool()?.iter_mut() {
        let mean = evaluate_policy(
            &mut agent,
            &mut **env,
            cfg.baseline.eval_episodes,
            substream(seed, "baseline-eval", 1),
        )?;
        returns.push(serde_json::json!({ "env_id": env.spec().env_id, "mean_return": mean }));
    }
    let summary = serde_json::to_string_pretty(&serde_json::json!({
        "total_steps": cfg.baseline.total_steps,
        "eval_episodes": cfg.baseline.eval_episodes,
        "returns": returns,
    }))?;
    write_file(&paths.baseline_summary, &summary)?;
    log_sidecar(
        &paths.run_log,
        &format!("train-baseline done in {:.1}s", started.elapsed().as_secs_f64()),
    );
    Ok(())
}

/// Roll out one full behavioural episode — the policy WITH its exploration
/// noise, as logged data would be — recording per-step simulator internals
/// so windows can restart exactly. The baseline counterfactual method later
/// replays the same policy in deterministic mode, so the noise recorded
/// here is exactly what that method strips away.
fn record_episode(
    agent: &mut Td3Agent,
    env: &mut dyn Environment,
    env_seed: u64,
) -> Result<Trajectory> {
    let mut state = env.reset(env_seed);
    let mut steps = Vec::new();
    let mut internals = Vec::new();
    for _ in 0..env.spec().horizon {
        let action = agent.select_action(&state.observable, true);
        let res = env.step(&action)?;
        steps.push(Step { state: state.observable.clone(), action, reward: res.reward });
        internals.push(state.internal.clone());
        state = res.next_state;
        if res.done {
            break;
        }
    }
    let meta = TrajectoryMeta {
        initial_internal: Some(internals[0].clone()),
        step_internals: Some(internals),
        source_seed: Some(env_seed),
        window_start: None,
        constrained_start: false,
    };
    Trajectory::new(steps, env.spec().env_id.clone(), meta)
}

/// Generate the observed-trajectory dataset: long baseline rollouts per
/// variant, sliced into windows, shuffled, and split disjointly into train
/// and test files.
pub fn run_gen_dataset(cfg: &RunConfig, seed: u64, paths: &TrialPaths) -> Result<()> {
    echo_config(cfg, &paths.config_echo)?;
    log_sidecar(&paths.run_log, &format!("gen-dataset start (seed {seed})"));
    let mut agent = Td3Agent::load(&paths.baseline_ckpt, substream(seed, "dataset-agent", 0))?;

    let mut windows = Vec::new();
    for (vi, env) in cfg.build_pool()?.iter_mut().enumerate() {
        for ep in 0..cfg.dataset.episodes_per_variant {
            let env_seed =
                substream(seed, "dataset-env", (vi * cfg.dataset.episodes_per_variant + ep) as u64);
            let long = record_episode(&mut agent, &mut **env, env_seed)?;
            windows.extend(sliding_window_dataset(&long, cfg.cf.window, cfg.cf.stride)?);
        }
    }
    let need = cfg.dataset.train_size + cfg.dataset.test_size;
    if windows.len() < need {
        return Err(Error::Config(format!(
            "dataset needs {need} windows (train {} + test {}) but only {} are achievable; \
             increase episodes_per_variant or reduce sizes",
            cfg.dataset.train_size,
            cfg.dataset.test_size,
            windows.len()
        )));
    }
    use rand::seq::SliceRandom;
    windows.shuffle(&mut crate::seed::stream_rng(seed, "dataset-split", 0));
    let test = windows.split_off(windows.len() - cfg.dataset.test_size);
    windows.truncate(cfg.dataset.train_size);
    if let Some(parent) = paths.train_set.parent() {
        std::fs::create_dir_all(parent)?;
    }
    write_jsonl(&windows, &paths.train_set)?;
    write_jsonl(&test, &paths.test_set)?;
    log_sidecar(
        &paths.run_log,
        &format!("gen-dataset done: {} train / {} test windows", windows.len(), test.len()),
    );
    Ok(())
}

/// The environment pool seen by the counterfactual generator: plain for
/// the unconstrained variant, wrapped in the constrained-region augmented
/// MDP when the config declares a constraint block.
pub fn build_cf_pool(
    cfg: &RunConfig,
    seed: u64,
    baseline_ckpt: &Path,
) -> Result<Vec<Box<dyn Environment>>> {
    let pool = cfg.build_pool()?;
    let Some(block) = &cfg.constraint else {
        return Ok(pool);
    };
    let mut wrapped: Vec<Box<dyn Environment>> = Vec::with_capacity(pool.len());
    for (i, env) in pool.into_iter().enumerate() {
        let policy = match &block.policy {
            PolicyBlock::Fixed { action } => ConstraintPolicy::Fixed(action.clone()),
            PolicyBlock::Baseline { checkpoint } => {
                let path = checkpoint.as_deref().unwrap_or(baseline_ckpt);
                let agent = Td3Agent::load(path, substream(seed, "constraint-policy", i as u64))?;
                ConstraintPolicy::Baseline(Box::new(agent))
            }
        };
        let spec = ConstraintSpec {
            bounds: block.bounds.clone(),
            policy,
            max_constrained_steps: block.max_constrained_steps,
        };
        wrapped.push(Box::new(AugmentedEnv::new(env, spec)?));
    }
    Ok(wrapped)
}

/// Train the counterfactual generator on the dataset, evaluating against
/// the baseline every `eval_every` interaction steps. Writes the generator
/// checkpoint and the learning-curve CSV.
pub fn run_train_cf(cfg: &RunConfig, seed: u64, paths: &TrialPaths) -> Result<()> {
    echo_config(cfg, &paths.config_echo)?;
    log_sidecar(&paths.run_log, &format!("train-cf start (seed {seed})"));
    let started = std::time::Instant::now();

    let train_set = read_jsonl(&paths.train_set)?;
    let test_set = read_jsonl(&paths.test_set)?;
    let cf_cfg = cfg.cf.to_cf_config();

    // The baseline is evaluated once on the PLAIN pool (no wrapper) and its
    // per-trajectory bests are reused for every learning-curve row.
    let mut baseline_agent =
        Td3Agent::load(&paths.baseline_ckpt, substream(seed, "cf-baseline", 0))?;
    let mut plain_pool = cfg.build_pool()?;
    let baseline_eval = baseline_counterfactuals(
        &mut baseline_agent,
        &mut plain_pool,
        &test_set,
        &cf_cfg,
        substream(seed, "baseline-eval-noise", 0),
    )?;

    let mut pool = build_cf_pool(cfg, seed, &paths.baseline_ckpt)?;
    let spec = pool[0].spec().clone();
    let mut agent = Td3Agent::new(&spec, cfg.td3.clone(), substream(seed, "cf-agent-init", 0))?;
    let rows = train_cf(
        &mut agent,
        &mut pool,
        &train_set,
        &test_set,
        &baseline_eval,
        &cf_cfg,
        substream(seed, "cf-train", 0),
        |row| log::debug!("curve row at {} steps", row.interaction_steps),
    )?;
    agent.save(&paths.cf_ckpt)?;

    let mut csv = String::from(CurveRow::CSV_HEADER);
    csv.push('\n');
    for row in &rows {
        csv.push_str(&row.to_csv_line());
        csv.push('\n');
    }
    write_file(&paths.curve_csv, &csv)?;
    log_sidecar(
        &paths.run_log,
        &format!(
            "train-cf done in {:.1}s ({} curve rows)",
            started.elapsed().as_secs_f64(),
            rows.len()
        ),
    );
    Ok(())
}

/// Plot-ready CSV of the best counterfactual per test trajectory: observed
/// and counterfactual states and actions, aligned per step.
fn plot_csv(test_set: &[Trajectory], eval: &MethodEval) -> String {
    let (sd, ad) = test_set
        .first()
        .map(|t| (t.state_dim(), t.action_dim()))
        .unwrap_or((0, 0));
    let mut header = String::from("trajectory,t");
    for i in 0..sd {
        header.push_str(&format!(",obs_s{i}"));
    }
    for i in 0..sd {
        header.push_str(&format!(",cf_s{i}"));
    }
    for i in 0..ad {
        header.push_str(&format!(",obs_a{i}"));
    }
    for i in 0..ad {
        header.push_str(&format!(",cf_a{i}"));
    }
    let mut out = header + "\n";
    for (idx, (observed, best)) in test_set.iter().zip(&eval.best).enumerate() {
        let Some(best) = best else { continue };
        for (t, (obs, cf)) in
            observed.steps().iter().zip(best.counterfactual.steps()).enumerate()
        {
            let mut line = format!("{idx},{t}");
            for v in obs.state.iter().chain(&cf.state).chain(&obs.action).chain(&cf.action) {
                line.push_str(&format!(",{v}"));
            }
            out.push_str(&line);
            out.push('\n');
        }
    }
    out
}

/// Final evaluation: proposed generator vs baseline on the test set.
/// Writes the metrics report JSON and the plot CSV, and returns the report.
pub fn run_eval(cfg: &RunConfig, seed: u64, paths: &TrialPaths) -> Result<MetricsReport> {
    echo_config(cfg, &paths.config_echo)?;
    log_sidecar(&paths.run_log, &format!("eval start (seed {seed})"));
    let test_set = read_jsonl(&paths.test_set)?;
    let cf_cfg = cfg.cf.to_cf_config();

    let mut cf_agent = Td3Agent::load(&paths.cf_ckpt, substream(seed, "eval-agent", 0))?;
    let mut cf_pool = build_cf_pool(cfg, seed, &paths.baseline_ckpt)?;
    let eval_p = evaluate_cf(
        &mut cf_agent,
        &mut cf_pool,
        &test_set,
        &cf_cfg,
        substream(seed, "final-eval-noise", 0),
        FINAL_EVAL_TAG,
    )?;

    let mut baseline_agent =
        Td3Agent::load(&paths.baseline_ckpt, substream(seed, "eval-agent", 1))?;
    let mut plain_pool = cfg.build_pool()?;
    let eval_b = baseline_counterfactuals(
        &mut baseline_agent,
        &mut plain_pool,
        &test_set,
        &cf_cfg,
        substream(seed, "baseline-eval-noise", 0),
    )?;

    let report = MetricsReport::build(&eval_p, &eval_b)?;
    write_file(&paths.metrics_json, &(report.to_json()? + "\n"))?;
    write_file(&paths.plot_csv, &plot_csv(&test_set, &eval_p))?;
    log_sidecar(
        &paths.run_log,
        &format!(
            "eval done: rho_plus {:.3} vs baseline {:.3}, rho_adv {:?}",
            report.rho_plus_proposed, report.rho_plus_baseline, report.rho_adv
        ),
    );
    Ok(report)
}

/// One full trial: baseline, dataset, counterfactual training, evaluation.
pub fn run_trial(cfg: &RunConfig, seed: u64) -> Result<MetricsReport> {
    let paths = TrialPaths::new(&cfg.output_dir, seed);
    run_train_baseline(cfg, seed, &paths)?;
    run_gen_dataset(cfg, seed, &paths)?;
    run_train_cf(cfg, seed, &paths)?;
    run_eval(cfg, seed, &paths)
}

/// Mean and standard error of the mean (zero for a single value).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

pub fn stat(values: &[f64]) -> Option<Stat> {
    if values.is_empty() {
        return None;
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let stderr = if n < 2 {
        0.0
    } else {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    };
    Some(Stat { mean, stderr, n })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedTrial {
    pub seed: u64,
    pub error: String,
}

/// Cross-trial aggregate: mean and standard error of each headline metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialsSummary {
    pub seeds: Vec<u64>,
    pub failed: Vec<FailedTrial>,
    /// True when at least one trial failed; the aggregate covers the rest.
    pub partial: bool,
    pub rho_plus_proposed: Option<Stat>,
    pub rho_plus_baseline: Option<Stat>,
    /// Aggregated over trials where rho_adv was defined.
    pub rho_adv: Option<Stat>,
}

/// Run the full pipeline once per seed and aggregate mean ± standard error
/// of the headline metrics. A failed trial is recorded and skipped; the
/// summary is then marked partial (callers map that to a nonzero exit).
pub fn run_trials(cfg: &RunConfig) -> Result<TrialsSummary> {
    echo_config(cfg, &cfg.output_dir.join("config.toml"))?;
    let mut reports = Vec::new();
    let mut failed = Vec::new();
    for &seed in &cfg.seeds {
        match run_trial(cfg, seed) {
            Ok(report) => reports.push(report),
            Err(e) => {
                log::error!("trial with seed {seed} failed: {e}");
                failed.push(FailedTrial { seed, error: e.to_string() });
            }
        }
    }
    let rp: Vec<f64> = reports.iter().map(|r| r.rho_plus_proposed).collect();
    let rb: Vec<f64> = reports.iter().map(|r| r.rho_plus_baseline).collect();
    let ra: Vec<f64> = reports.iter().filter_map(|r| r.rho_adv).collect();
    let summary = TrialsSummary {
        seeds: cfg.seeds.clone(),
        partial: !failed.is_empty(),
        failed,
        rho_plus_proposed: stat(&rp),
        rho_plus_baseline: stat(&rb),
        rho_adv: stat(&ra),
    };
    write_file(
        &cfg.output_dir.join("trials_summary.json"),
        &(serde_json::to_string_pretty(&summary)? + "\n"),
    )?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stat_handles_degenerate_inputs() {
        assert_eq!(stat(&[]), None);
        let one = stat(&[0.4]).unwrap();
        assert_eq!((one.mean, one.stderr, one.n), (0.4, 0.0, 1));
        // Oracle: values 1..5 have mean 3 and SEM sqrt(2.5/5) ~ 0.7071.
        let s = stat(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert!((s.mean - 3.0).abs() < 1e-12);
        assert!((s.stderr - (2.5f64 / 5.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn trial_paths_are_per_seed() {
        let a = TrialPaths::new(Path::new("/tmp/x"), 1);
        let b = TrialPaths::new(Path::new("/tmp/x"), 2);
        assert_ne!(a.dir, b.dir);
        assert!(a.baseline_ckpt.starts_with(&a.dir));
    }

    #[test]
    fn plot_csv_shape() {
        use crate::cfgen::CfResult;
        use crate::trajectory::{Step, TrajectoryMeta};
        let traj = |reward: f64| {
            Trajectory::new(
                (0..3)
                    .map(|i| Step {
                        state: vec![i as f64, 0.0],
                        action: vec![0.1],
                        reward,
                    })
                    .collect(),
                "x",
                TrajectoryMeta::default(),
            )
            .unwrap()
        };
        let observed = traj(0.0);
        let best = CfResult {
            counterfactual: traj(1.0),
            distance: 0.5,
            return_cf: 3.0,
            return_observed: 0.0,
            positive: true,
        };
        let eval = MethodEval { best: vec![Some(best), None] };
        let csv = plot_csv(&[observed.clone(), observed], &eval);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "trajectory,t,obs_s0,obs_s1,cf_s0,cf_s1,obs_a0,cf_a0");
        // Only the trajectory with a best counterfactual is exported.
        assert_eq!(lines.len(), 1 + 3);
        assert!(lines[1].starts_with("0,0,"));
    }
}
