use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use cfrl::config::RunConfig;
use cfrl::pipeline::{self, TrialPaths};

/// Counterfactual-explanation experiments for continuous-action RL.
#[derive(Parser)]
#[command(name = "cfrl", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Trial seed; defaults to the first entry of `seeds` in the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the baseline policy and write its checkpoint and loss log.
    TrainBaseline {
        #[command(flatten)]
        common: Common,
    },
    /// Roll out the baseline and write train/test observed-trajectory sets.
    GenDataset {
        #[command(flatten)]
        common: Common,
        /// Baseline checkpoint (default: the trial's baseline.json).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train the counterfactual generator; writes checkpoint + curve CSV.
    TrainCf {
        #[command(flatten)]
        common: Common,
        /// Baseline checkpoint (default: the trial's baseline.json).
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// Training windows JSONL (default: the trial's dataset_train.jsonl).
        #[arg(long)]
        train_set: Option<PathBuf>,
        /// Test windows JSONL (default: the trial's dataset_test.jsonl).
        #[arg(long)]
        test_set: Option<PathBuf>,
    },
    /// Evaluate generator vs baseline; writes metrics JSON + plot CSV.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Generator checkpoint (default: the trial's cf.json).
        #[arg(long)]
        cf_checkpoint: Option<PathBuf>,
        /// Baseline checkpoint (default: the trial's baseline.json).
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// Test windows JSONL (default: the trial's dataset_test.jsonl).
        #[arg(long)]
        test_set: Option<PathBuf>,
    },
    /// Run the full pipeline for every seed and aggregate the metrics.
    Trials {
        /// Run configuration (TOML).
        #[arg(long)]
        config: PathBuf,
    },
}

fn load(common: &Common) -> anyhow::Result<(RunConfig, u64, TrialPaths)> {
    let cfg = RunConfig::load(&common.config)
        .with_context(|| format!("loading {}", common.config.display()))?;
    let seed = common.seed.unwrap_or(cfg.seeds[0]);
    let paths = TrialPaths::new(&cfg.output_dir, seed);
    Ok((cfg, seed, paths))
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::TrainBaseline { common } => {
            let (cfg, seed, paths) = load(&common)?;
            pipeline::run_train_baseline(&cfg, seed, &paths)?;
            println!("baseline checkpoint: {}", paths.baseline_ckpt.display());
        }
        Command::GenDataset { common, checkpoint } => {
            let (cfg, seed, mut paths) = load(&common)?;
            if let Some(p) = checkpoint {
                paths.baseline_ckpt = p;
            }
            pipeline::run_gen_dataset(&cfg, seed, &paths)?;
            println!("datasets: {} / {}", paths.train_set.display(), paths.test_set.display());
        }
        Command::TrainCf { common, baseline, train_set, test_set } => {
            let (cfg, seed, mut paths) = load(&common)?;
            if let Some(p) = baseline {
                paths.baseline_ckpt = p;
            }
            if let Some(p) = train_set {
                paths.train_set = p;
            }
            if let Some(p) = test_set {
                paths.test_set = p;
            }
            pipeline::run_train_cf(&cfg, seed, &paths)?;
            println!("generator checkpoint: {}", paths.cf_ckpt.display());
            println!("learning curve: {}", paths.curve_csv.display());
        }
        Command::Eval { common, cf_checkpoint, baseline, test_set } => {
            let (cfg, seed, mut paths) = load(&common)?;
            if let Some(p) = cf_checkpoint {
                paths.cf_ckpt = p;
            }
            if let Some(p) = baseline {
                paths.baseline_ckpt = p;
            }
            if let Some(p) = test_set {
                paths.test_set = p;
            }
            let report = pipeline::run_eval(&cfg, seed, &paths)?;
            println!(
                "rho_plus: {:.4} (baseline {:.4}), rho_adv: {}",
                report.rho_plus_proposed,
                report.rho_plus_baseline,
                report.rho_adv.map_or_else(|| "undefined".into(), |v| format!("{v:.4}")),
            );
            println!("report: {}", paths.metrics_json.display());
        }
        Command::Trials { config } => {
            let cfg =
                RunConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            let summary = pipeline::run_trials(&cfg)?;
            let fmt = |s: &Option<pipeline::Stat>| {
                s.as_ref().map_or_else(
                    || "undefined".to_string(),
                    |s| format!("{:.4} ± {:.4} (n={})", s.mean, s.stderr, s.n),
                )
            };
            println!("rho_plus proposed: {}", fmt(&summary.rho_plus_proposed));
            println!("rho_plus baseline: {}", fmt(&summary.rho_plus_baseline));
            println!("rho_adv:           {}", fmt(&summary.rho_adv));
            if summary.partial {
                for f in &summary.failed {
                    eprintln!("trial seed {} failed: {}", f.seed, f.error);
                }
                eprintln!("aggregate is PARTIAL ({} trials failed)", summary.failed.len());
                return Ok(ExitCode::from(2));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help/--version are successes; anything else is a usage error.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
