//! `predrisk`: command-line driver for the predictive risk experiments.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod output;

/// Bad flag values, config entries or names. Exits with status 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

#[derive(Parser)]
#[command(name = "predrisk", version, about = "Gaussian predictive density risk experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// Master seed (default 20110503).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// File of `key = value` settings; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo predictive risk of one Gaussian strategy.
    Risk(commands::RiskArgs),
    /// Growth-rate regularity checks across dimensions.
    Rasl(commands::RaslArgs),
    /// Risk bound constants and the large-sample envelope.
    Bounds(commands::BoundsArgs),
    /// Six-strategy loss table on batting data.
    Table1(commands::Table1Args),
    /// Sparse threshold rule against its minimax rate.
    Sparse(commands::SparseArgs),
    /// Quantized divergence bound on a random corpus of box events.
    Betting(commands::BettingArgs),
}

fn exit_status(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<predrisk_core::Error>() {
        Some(predrisk_core::Error::Validation(_)) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    predrisk_core::mc::init_threads();
    let result = match cli.command {
        Command::Risk(a) => commands::risk(a),
        Command::Rasl(a) => commands::rasl(a),
        Command::Bounds(a) => commands::bounds(a),
        Command::Table1(a) => commands::table1(a),
        Command::Sparse(a) => commands::sparse(a),
        Command::Betting(a) => commands::betting(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_status(&e))
        }
    }
}
