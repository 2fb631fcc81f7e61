//! `riskrl`: solve, learn, simulate, fit and emit curves from TOML configs.
//!
//! Exit codes: 0 success, 1 runtime or numeric failure, 2 invalid config or input.

// `!(x > 0.0)` is used on purpose so NaN fails the check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use riskrl::par::{with_jobs, Exec};

use crate::commands::Ctx;
use crate::config::{invalid, load, ConfigError};

#[derive(Debug, Parser)]
#[command(name = "riskrl", version, about = "Risk-sensitive Q-learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML config of the subcommand (optional for `curves`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Overrides the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for multi-start fits and batched simulation; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Value iteration: v.csv, q.csv, policy.csv.
    Solve,
    /// One learner run: q.csv, counts.csv, summary.csv and optionally trace.csv.
    Learn,
    /// Trajectory under a fixed policy or a learning agent, plus path statistics.
    Simulate,
    /// Per-subject model fits: fit.csv and analysis.csv.
    Fit,
    /// Utility and subjective-probability curves: utility.csv and wp.csv.
    Curves,
}

fn config_path(cli: &Cli) -> anyhow::Result<&Path> {
    cli.config.as_deref().ok_or_else(|| invalid("--config is required for this command"))
}

fn execute(cli: &Cli, exec: Exec) -> anyhow::Result<()> {
    std::fs::create_dir_all(&cli.out).map_err(|e| invalid(format!("{}: {e}", cli.out.display())))?;
    let base = cli.config.as_deref().and_then(Path::parent).unwrap_or(Path::new("."));
    let ctx = Ctx { base, out: &cli.out, seed: cli.seed, exec };
    match cli.command {
        Command::Solve => commands::solve(&load(config_path(cli)?)?, &ctx),
        Command::Learn => commands::learn(&load(config_path(cli)?)?, &ctx),
        Command::Simulate => commands::simulate_cmd(&load(config_path(cli)?)?, &ctx),
        Command::Fit => commands::fit_cmd(&load(config_path(cli)?)?, &ctx),
        Command::Curves => {
            let cfg = match &cli.config {
                Some(p) => load(p)?,
                None => Default::default(),
            };
            commands::curves(&cfg, &ctx)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = if cli.jobs == 0 { execute(&cli, Exec::Parallel) } else { with_jobs(cli.jobs, |exec| execute(&cli, exec)) };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
