//! Command-line harness: configuration, file formats and subcommands.

pub mod commands;
pub mod config;
pub mod trajio;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{cmd_calibrate, cmd_oracle, cmd_simulate, cmd_sweep, exit_code, Overrides, Report};
pub use config::{load_config, parse_config, RunConfig};
pub use trajio::{parse_trajectory, read_observations, read_trajectory, write_trajectory};

#[derive(Debug, Parser)]
#[command(name = "pisnn", version, about = "Flux-quantized spiking solver for diffusion problems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the configured simulation and write its trajectory and report.
    Simulate(CommonArgs),
    /// Write the configured reference solution as a trajectory file.
    Oracle(CommonArgs),
    /// Fit the quota to the configured teacher, then simulate with it.
    Calibrate(CommonArgs),
    /// Sweep quotas and write the accuracy/spike CSV.
    Sweep(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (default: `[output] dir`, else the working directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Fixed quota, overriding the config (a single point for `sweep`); ignored by `calibrate`.
    #[arg(long)]
    pub quota: Option<f64>,
    /// Step count override (replaces `t_end / dt`).
    #[arg(long)]
    pub steps: Option<usize>,
    /// Do not echo the report to stdout.
    #[arg(long)]
    pub quiet: bool,
}

impl CommonArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            out: self.out.clone(),
            quota: self.quota,
            steps: self.steps,
            quiet: self.quiet,
        }
    }
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let (args, result) = match &cli.command {
        Command::Simulate(a) => (a, cmd_simulate(&a.config, &a.overrides()).map(drop)),
        Command::Oracle(a) => (a, cmd_oracle(&a.config, &a.overrides()).map(drop)),
        Command::Calibrate(a) => (a, cmd_calibrate(&a.config, &a.overrides()).map(drop)),
        Command::Sweep(a) => (a, cmd_sweep(&a.config, &a.overrides()).map(drop)),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}: {e}", args.config.display());
            exit_code(&e)
        }
    }
}
