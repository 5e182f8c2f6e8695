//! `cascade-gate`: run, sweep and calibrate tile-gating cascades.
//!
//! Exit codes: 0 on success, 1 for invalid input, 2 for internal errors.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::FileConfig;

#[derive(Debug, Parser)]
#[command(name = "cascade-gate", version, about = "Tile gating for tiled ship detection")]
struct Cli {
    /// JSON config file; flags override its values [env: CASCADE_GATE_CONFIG]
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for sweeps [default: 1]
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Apply one gate to scenes and write a report plus per-scene decision logs
    Run(commands::RunArgs),
    /// Sweep gate thresholds and write time-saving vs relative-AP curves
    Sweep(commands::SweepArgs),
    /// Generate synthetic scenes
    Synth(commands::SynthArgs),
    /// Derive a cost model from a measured detector-only run
    Calibrate(commands::CalibrateArgs),
}

fn execute(cli: &Cli) -> cascade_gate::Result<()> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let threads = cli.threads.or(file.threads).unwrap_or(1);
    if threads == 0 {
        return Err(cascade_gate::Error::InvalidArgument(
            "--threads must be at least 1".into(),
        ));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| cascade_gate::Error::Internal(e.to_string()))?;
    match &cli.command {
        Command::Run(a) => commands::run(a, &file),
        Command::Sweep(a) => commands::sweep(a, &file),
        Command::Synth(a) => commands::synth(a, &file),
        Command::Calibrate(a) => commands::calibrate(a, &file),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
