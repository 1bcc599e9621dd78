//! `dyntx`: drive the treatment-regime engine from archivable JSON configs.
//!
//! Exit codes: 0 success, 2 assumption validation failed (report written),
//! 1 any other error.

mod config;
mod run;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

use config::{BackendChoice, CommandKind};

#[derive(Parser)]
#[command(name = "dyntx", version, about = "Dynamic treatment-regime analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check instrument relevance and matching support for a model.
    Validate(CommonArgs),
    /// Draw an observational panel from a model and write it as CSV.
    Simulate(CommonArgs),
    /// Reference regime values straight from the structural model.
    Oracle(CommonArgs),
    /// Identified regime values from the observable law alone.
    Identify(CommonArgs),
    /// Interval identification where matching support is incomplete.
    Bounds(CommonArgs),
    /// Rank regimes and report argmax and excluded sets.
    Optimize(CommonArgs),
    /// Plug-in estimate and bootstrap interval from a panel CSV.
    Estimate(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the config's evaluator backend.
    #[arg(long, value_enum)]
    backend: Option<BackendChoice>,
    /// Include the recursion trace in results.
    #[arg(long)]
    trace: bool,
}

impl Command {
    fn kind(&self) -> CommandKind {
        match self {
            Command::Validate(_) => CommandKind::Validate,
            Command::Simulate(_) => CommandKind::Simulate,
            Command::Oracle(_) => CommandKind::Oracle,
            Command::Identify(_) => CommandKind::Identify,
            Command::Bounds(_) => CommandKind::Bounds,
            Command::Optimize(_) => CommandKind::Optimize,
            Command::Estimate(_) => CommandKind::Estimate,
        }
    }

    fn args(&self) -> &CommonArgs {
        match self {
            Command::Validate(a)
            | Command::Simulate(a)
            | Command::Oracle(a)
            | Command::Identify(a)
            | Command::Bounds(a)
            | Command::Optimize(a)
            | Command::Estimate(a) => a,
        }
    }
}

fn main() {
    let cli = Cli::parse();
    let kind = cli.command.kind();
    match run::run(kind, cli.command.args()) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}
