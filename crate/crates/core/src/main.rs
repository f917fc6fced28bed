use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use stationary_sde::config::{ConfigError, Experiment, ExperimentConfig};
use stationary_sde::experiments::{run, RunError};

/// Euler-scheme experiments for SDEs driven by Gaussian noise with stationary increments.
#[derive(Debug, Parser)]
#[command(name = "stationary-sde", version)]
struct Args {
    /// sample-noise | simulate | stationary-stats | ou-variance | innovations | dependence | sup-moment | full-suite
    experiment: String,
    /// key = value configuration file
    #[arg(long)]
    config: PathBuf,
    /// overrides `seed` from the config
    #[arg(long)]
    seed: Option<u64>,
    /// overrides `out_dir` from the config
    #[arg(long)]
    out: Option<PathBuf>,
    /// worker threads; falls back to STATIONARY_SDE_THREADS, then all cores
    #[arg(long, env = "STATIONARY_SDE_THREADS")]
    threads: Option<usize>,
}

fn load(args: &Args) -> Result<ExperimentConfig, RunError> {
    let experiment: Experiment = args.experiment.parse()?;
    let text = fs::read_to_string(&args.config)
        .map_err(|e| ConfigError::Invalid(format!("cannot read {}: {e}", args.config.display())))?;
    let mut cfg = ExperimentConfig::parse(&text)?;
    cfg.experiment = experiment;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }
    if args.threads.is_some() {
        cfg.threads = args.threads;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = load(&args).and_then(|cfg| run(&cfg));
    match result {
        Ok(outcome) => {
            let failed: Vec<_> = outcome.checks.iter().filter(|c| !c.pass).collect();
            for c in &failed {
                eprintln!(
                    "FAIL {} = {} (threshold {})",
                    c.name, c.statistic, c.threshold
                );
            }
            println!("{} checks, {} failed", outcome.checks.len(), failed.len());
            ExitCode::from(if failed.is_empty() { 0 } else { 1 })
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
