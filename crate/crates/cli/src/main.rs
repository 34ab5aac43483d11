//! `sc-lab`: exact success-conditioning analyses and identity checks from the
//! command line.
//!
//! Exit status: 0 when the run completed and every verification passed,
//! 1 when a verification failed, 2 on any input or usage error.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use commands::Outcome;

const THREADS_VAR: &str = "SC_LAB_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "sc-lab",
    version,
    about = "Exact success-conditioning analysis for tabular episodic MDPs"
)]
#[command(after_help = "Set SC_LAB_THREADS to cap the worker threads. Outputs do not depend on it.")]
struct Cli {
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// V, Q, A, ρ, occupancies, π₊ and action-influence as JSON.
    Analyze(commands::AnalyzeArgs),
    /// The four identity and improvement suites; exit 1 if any fails.
    Identities(commands::IdentitiesArgs),
    /// Randomized optimality check of π₊ on its trust region; exit 1 on failure.
    TrustRegion(commands::TrustRegionArgs),
    /// Largest rare-action probability inside χ² and KL balls, as CSV.
    ToleranceSweep(commands::ToleranceSweepArgs),
    /// Seeded episodes from the behavior policy in the trajectory text format.
    Sample(commands::SampleArgs),
    /// Fits π̂ to sampled successes and checks the offline deployment bound; exit 1 if violated.
    BoundCheck(commands::BoundCheckArgs),
    /// Beta-bandit proxy threshold sweep as CSV.
    ThresholdSweep(commands::ThresholdSweepArgs),
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .with_context(|| format!("{THREADS_VAR} must be a positive integer, got {raw:?}"))?;
    if n == 0 {
        bail!("{THREADS_VAR} must be a positive integer, got 0");
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("cannot configure the thread pool")
}

fn run(cli: &Cli) -> Result<Outcome> {
    configure_threads()?;
    let outcome = match &cli.command {
        Command::Analyze(a) => commands::analyze(a),
        Command::Identities(a) => commands::identities(a),
        Command::TrustRegion(a) => commands::trust_region(a),
        Command::ToleranceSweep(a) => commands::tolerance_sweep(a),
        Command::Sample(a) => commands::sample(a),
        Command::BoundCheck(a) => commands::bound_check(a),
        Command::ThresholdSweep(a) => commands::threshold_sweep_cmd(a),
    }?;
    output::emit(cli.output.as_deref(), &outcome.text)?;
    Ok(outcome)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outcome) if outcome.passed => ExitCode::SUCCESS,
        Ok(_) => {
            eprintln!("verification failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
