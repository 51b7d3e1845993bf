//! End-to-end runs of the `cfrl` binary: every subcommand against a small
//! point-mass configuration in a temporary directory, plus the error paths
//! a user is most likely to hit.

use std::path::Path;
use std::process::{Command, Output};

fn cfrl() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cfrl"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = cfrl().args(args).output().expect("spawn cfrl");
    assert!(
        out.status.success(),
        "cfrl {args:?} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr),
    );
    out
}

/// A configuration small enough for the whole pipeline to finish in seconds.
fn small_config(output_dir: &Path, seeds: &str) -> String {
    format!(
        r#"
output_dir = "{}"
seeds = {seeds}

[[env.variants]]
kind = "pointmass"

[env.variants.params]
noise_std = 0.05

[baseline]
total_steps = 1500
eval_episodes = 5

[dataset]
episodes_per_variant = 4
train_size = 6
test_size = 6

[td3]
hidden = [16, 16]
batch_size = 64
warmup = 300
gamma = 0.97
actor_lr = 3e-4
critic_lr = 1e-3
gradient_steps = 5

[cf]
lambda = 1.0
n_observed = 40
n_cf = 3
window = 10
stride = 10
eval_every = 300
eval_rollouts = 5
"#,
        output_dir.display()
    )
}

#[test]
fn stages_produce_artifacts_and_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("run");
    let cfg_path = tmp.path().join("cfg.toml");
    std::fs::write(&cfg_path, small_config(&out_dir, "[1]")).unwrap();
    let cfg = cfg_path.to_str().unwrap();

    let stdout = |o: &Output| String::from_utf8_lossy(&o.stdout).into_owned();

    let out = run_ok(&["train-baseline", "--config", cfg, "--seed", "1"]);
    assert!(stdout(&out).contains("baseline checkpoint"));
    let out = run_ok(&["gen-dataset", "--config", cfg, "--seed", "1"]);
    assert!(stdout(&out).contains("datasets"));
    let out = run_ok(&["train-cf", "--config", cfg, "--seed", "1"]);
    assert!(stdout(&out).contains("generator checkpoint"));
    let out = run_ok(&["eval", "--config", cfg, "--seed", "1"]);
    assert!(stdout(&out).contains("rho_plus"));

    let trial = out_dir.join("seed-1");
    for name in [
        "config.toml",
        "baseline.json",
        "baseline_loss.csv",
        "baseline_summary.json",
        "dataset_train.jsonl",
        "dataset_test.jsonl",
        "cf.json",
        "learning_curve.csv",
        "metrics.json",
        "plot_best_cf.csv",
        "run.log",
    ] {
        assert!(trial.join(name).is_file(), "missing artifact {name}");
    }

    // The metrics report must be valid JSON with rates in [0, 1] and one
    // detail row per test trajectory.
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(trial.join("metrics.json")).unwrap())
            .unwrap();
    for key in ["rho_plus_proposed", "rho_plus_baseline"] {
        let v = metrics[key].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&v), "{key} = {v}");
    }
    assert!(metrics["rho_adv"].is_null() || metrics["rho_adv"].as_f64().is_some());
    assert_eq!(metrics["details"].as_array().unwrap().len(), 6);
    assert_eq!(metrics["counts"]["n_test"].as_u64(), Some(6));
}

#[test]
fn trials_aggregates_seeds() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("run");
    let cfg_path = tmp.path().join("cfg.toml");
    std::fs::write(&cfg_path, small_config(&out_dir, "[1, 2]")).unwrap();

    let out = run_ok(&["trials", "--config", cfg_path.to_str().unwrap()]);
    let text = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(text.contains("rho_plus proposed"), "stdout: {text}");
    assert!(text.contains("n=2"), "stdout: {text}");

    assert!(out_dir.join("seed-1").join("metrics.json").is_file());
    assert!(out_dir.join("seed-2").join("metrics.json").is_file());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("trials_summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["seeds"], serde_json::json!([1, 2]));
    assert_eq!(summary["partial"], serde_json::json!(false));
    assert_eq!(summary["rho_plus_proposed"]["n"].as_u64(), Some(2));
}

#[test]
fn cli_reports_usage_and_runtime_errors() {
    // Nonexistent config: runtime error, exit code 2, message names the file.
    let out = cfrl()
        .args(["train-baseline", "--config", "/nonexistent/cfg.toml"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr).into_owned();
    assert!(err.contains("/nonexistent/cfg.toml"), "stderr: {err}");

    // Eval before anything was trained: the first missing input (the test
    // set) is a runtime error naming the expected path.
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("cfg.toml");
    std::fs::write(&cfg_path, small_config(&tmp.path().join("run"), "[1]")).unwrap();
    let out = cfrl()
        .args(["eval", "--config", cfg_path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dataset_test.jsonl"));

    // Unknown flag: usage error, exit code 1.
    let out = cfrl().args(["trials", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));

    // Help is a success.
    let out = cfrl().args(["--help"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("train-baseline"));
}
