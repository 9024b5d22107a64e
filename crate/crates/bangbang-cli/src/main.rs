//! `bbctl`: command-line front end for the bang-bang control toolkit.
//!
//! Subcommands: `ofpqs` (fixed-point search curves), `optimize` (GA pulse
//! synthesis against a unitary, search-iterate, or pseudopure-state target),
//! `simulate` (evaluate a stored sequence), `pps` (score a stored sequence
//! as a pseudopure-state preparation), `bench` (BB-vs-SM timing grid).
//!
//! Every run writes its artifacts plus a `manifest.toml` recording the
//! resolved configuration, the seed actually used, and the artifact list;
//! outputs are deterministic for a fixed seed (wall-time fields aside).

mod commands;

use anyhow::Result;
use clap::{Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "bbctl", version, about = "Bang-bang pulse control toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fixed-point search: success-probability curve and phase schedules
    Ofpqs(commands::OfpqsArgs),
    /// GA synthesis of a pulse sequence for a target unitary or state
    Optimize(commands::OptimizeArgs),
    /// Evaluate a stored sequence: propagator, fidelities, output state
    Simulate(commands::SimulateArgs),
    /// Score a stored twirl-bearing sequence as a PPS preparation
    Pps(commands::PpsArgs),
    /// Time BB propagator evaluation against the SM baseline
    Bench(commands::BenchArgs),
}

/// Default output directory: `--out`, else `BBCTL_OUT`, else `.`.
pub(crate) fn resolve_out(out: Option<PathBuf>) -> PathBuf {
    out.or_else(|| std::env::var_os("BBCTL_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

/// Use the given seed, or draw one (recorded in the manifest either way).
pub(crate) fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_nanos() as u64)
            .unwrap_or(0)
    })
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Ofpqs(args) => commands::cmd_ofpqs(args),
        Command::Optimize(args) => commands::cmd_optimize(args),
        Command::Simulate(args) => commands::cmd_simulate(args),
        Command::Pps(args) => commands::cmd_pps(args),
        Command::Bench(args) => commands::cmd_bench(args),
    }
}
