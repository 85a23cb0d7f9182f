//! `doasim`: scenario files in, CSV and plot data out.
//!
//! Subcommands: `spectrum` (one pseudospectrum), `simulate` (one trial,
//! verbose), `sweep` (RMSE versus SNR from a config file), `example1`
//! and `example2` (built-in nonuniform-noise benchmarks). Exit codes:
//! 0 success, 2 config or usage error, 3 numerical failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "doasim",
    version,
    about = "Direction-of-arrival estimation simulator for nonuniform sensor noise",
    after_help = "CSV goes to stdout unless --out is given; diagnostics go to stderr."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,

    /// Scenario file (JSON); required except for example1/example2
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Output file (default: stdout)
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,

    /// Override the scenario seed
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,

    /// Override the Monte Carlo trial count per SNR point
    #[arg(long, global = true, value_name = "N")]
    pub k: Option<usize>,

    /// Run a single SNR point (dB)
    #[arg(long, global = true, value_name = "DB", conflicts_with = "snr_list")]
    pub snr: Option<f64>,

    /// Comma-separated SNR points (dB)
    #[arg(long = "snr-list", global = true, value_name = "DB,DB,...", value_delimiter = ',')]
    pub snr_list: Option<Vec<f64>>,

    /// Cap the worker thread count (default: all cores)
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,

    /// Override the scan grid step (degrees)
    #[arg(long = "grid-step", global = true, value_name = "DEG")]
    pub grid_step: Option<f64>,

    /// Restrict to one method, or run all three
    #[arg(long, global = true, value_enum, value_name = "METHOD")]
    pub method: Option<MethodArg>,

    /// More logging (repeatable)
    #[arg(short = 'v', global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    /// Less logging (repeatable)
    #[arg(short = 'q', global = true, action = clap::ArgAction::Count, conflicts_with = "verbose")]
    pub quiet: u8,

    /// Fill the mean_trial_ms CSV column (off by default: timings vary
    /// run to run, and the default output is byte-reproducible)
    #[arg(long, global = true)]
    pub timing: bool,

    /// Also write per-trial estimates to this CSV (fixed-noise sweeps)
    #[arg(long = "trials-out", global = true, value_name = "PATH")]
    pub trials_out: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
pub enum CliCommand {
    /// Evaluate one pseudospectrum on one synthesized sample covariance
    Spectrum,
    /// Run a single trial and print every method's estimates
    Simulate,
    /// Sweep RMSE versus SNR per the scenario file
    Sweep,
    /// Built-in benchmark: fixed noise, WNPR 50, two close sources
    Example1,
    /// Built-in benchmark: random noise profiles with WNPR up to 30
    Example2,
}

#[derive(ValueEnum, Clone, Copy)]
pub enum MethodArg {
    Classical,
    Phase1,
    Phase2,
    All,
}

fn init_logging(verbose: u8, quiet: u8) {
    let level = match (quiet, verbose) {
        (0, 0) => log::LevelFilter::Info,
        (0, 1) => log::LevelFilter::Debug,
        (0, _) => log::LevelFilter::Trace,
        (1, _) => log::LevelFilter::Warn,
        (_, _) => log::LevelFilter::Error,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .format_target(false)
        .init();
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Usage problems exit 2; --help and --version exit 0.
            let code = u8::try_from(err.exit_code()).unwrap_or(2);
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    init_logging(cli.verbose, cli.quiet);

    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("doasim: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(err) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("doasim: cannot configure {n} threads: {err}");
            return ExitCode::from(2);
        }
    }

    match commands::dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("doasim: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
