//! Subcommand implementations and the exit-code policy.

use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use doa_core::array::{signal_power_for_snr, NoiseProfile, SourceSet};
use doa_core::estimator::{
    build_qnun, classical_noise_subspace, estimate_common_power, estimate_noise_cov,
    music_pseudospectrum, phase1_noise_subspace, phase2_noise_subspace, smallest_diag_index,
    strip_diagonal, Method, NoiseSubspace,
};
use doa_core::harness::{
    draw_noise_profile, format_significant, random_q_experiment, run_trial, snapshot_stream,
    sweep_snr, write_sweep_csv, write_trials_csv, NoiseSpec, SweepResult, CSV_DIGITS,
};
use doa_core::snapshots::{generate_snapshots, sample_covariance, RngSeed};

use crate::config::{self, ConfigFile, Resolved};
use crate::{Cli, CliCommand, MethodArg};

/// Failure with its exit code: 2 for config or usage problems, 3 for
/// numerical failures, 1 for I/O trouble mid-run.
#[derive(Debug)]
pub enum AppError {
    Config(String),
    Numerical(String),
    Io(String),
}

impl AppError {
    pub fn exit_code(&self) -> u8 {
        match self {
            AppError::Config(_) => 2,
            AppError::Numerical(_) => 3,
            AppError::Io(_) => 1,
        }
    }
}

impl fmt::Display for AppError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AppError::Config(msg) | AppError::Numerical(msg) | AppError::Io(msg) => {
                write!(f, "{msg}")
            }
        }
    }
}

impl From<config::ConfigError> for AppError {
    fn from(err: config::ConfigError) -> Self {
        AppError::Config(err.to_string())
    }
}

impl From<io::Error> for AppError {
    fn from(err: io::Error) -> Self {
        AppError::Io(err.to_string())
    }
}

pub fn dispatch(cli: &Cli) -> Result<(), AppError> {
    match cli.command {
        CliCommand::Spectrum => spectrum(cli),
        CliCommand::Simulate => simulate(cli),
        CliCommand::Sweep => sweep(cli, None),
        CliCommand::Example1 => sweep(cli, Some(config::example1())),
        CliCommand::Example2 => sweep(cli, Some(config::example2())),
    }
}

/// Loads the scenario (file or built-in), applies flag overrides, and
/// resolves it. Logs the resolved seed so every run is replayable.
fn resolved_scenario(cli: &Cli, builtin: Option<ConfigFile>) -> Result<Resolved, AppError> {
    let mut file = match (builtin, &cli.config) {
        (Some(_), Some(_)) => {
            return Err(AppError::Config(
                "the example subcommands are self-contained; drop --config or use `sweep`".into(),
            ))
        }
        (Some(b), None) => b,
        (None, Some(path)) => config::load(path)?,
        (None, None) => {
            return Err(AppError::Config(
                "missing --config PATH (only example1/example2 run without one)".into(),
            ))
        }
    };

    if let Some(seed) = cli.seed {
        file.seed = seed;
    }
    if let Some(k) = cli.k {
        file.k_trials = k;
    }
    if let Some(snr) = cli.snr {
        file.snr_db_list = vec![snr];
    } else if let Some(list) = &cli.snr_list {
        file.snr_db_list = list.clone();
    }
    if let Some(step) = cli.grid_step {
        file.grid.step_deg = step;
    }
    if let Some(method) = cli.method {
        file.methods = match method {
            MethodArg::All => Method::ALL.iter().map(|m| m.as_str().to_string()).collect(),
            MethodArg::Classical => vec!["classical".into()],
            MethodArg::Phase1 => vec!["phase1".into()],
            MethodArg::Phase2 => vec!["phase2".into()],
        };
    }

    let resolved = config::resolve(&file)?;
    eprintln!("doasim: seed = {}", resolved.scenario.seed);
    Ok(resolved)
}

fn open_output(path: &Option<PathBuf>) -> Result<Box<dyn Write>, AppError> {
    match path {
        Some(p) => {
            let file = File::create(p).map_err(|e| {
                AppError::Config(format!("cannot create output {}: {e}", p.display()))
            })?;
            Ok(Box::new(BufWriter::new(file)))
        }
        None => Ok(Box::new(io::stdout().lock())),
    }
}

/// Fixed profile, or the realization-0 draw for random-noise scenarios.
fn single_profile(resolved: &Resolved) -> NoiseProfile<f64> {
    match &resolved.scenario.noise {
        NoiseSpec::Fixed(p) => p.clone(),
        NoiseSpec::Random(spec) => {
            let p = draw_noise_profile(
                resolved.scenario.seed,
                0,
                resolved.scenario.geometry.sensors(),
                spec,
            );
            log::info!(
                "random noise scenario; using realization 0: {:?}",
                p.variances()
            );
            p
        }
    }
}

fn single_snr(cli: &Cli, resolved: &Resolved) -> f64 {
    cli.snr.unwrap_or(resolved.snr_db_list[0])
}

/// Evaluates one pseudospectrum on one synthesized sample covariance and
/// writes `theta_deg,s_value` rows.
fn spectrum(cli: &Cli) -> Result<(), AppError> {
    let resolved = resolved_scenario(cli, None)?;
    let method = match cli.method {
        None => Method::Phase2,
        Some(MethodArg::All) => {
            return Err(AppError::Config(
                "spectrum plots one method at a time; pick classical, phase1, or phase2".into(),
            ))
        }
        Some(MethodArg::Classical) => Method::Classical,
        Some(MethodArg::Phase1) => Method::Phase1,
        Some(MethodArg::Phase2) => Method::Phase2,
    };

    let scenario = &resolved.scenario;
    let profile = single_profile(&resolved);
    let snr_db = single_snr(cli, &resolved);
    let sources = scenario.doas_deg.len();
    let power = signal_power_for_snr(snr_db, &profile);
    let source_set = SourceSet::equal_power(scenario.doas_deg.clone(), power)
        .map_err(|e| AppError::Config(e.to_string()))?;
    let x = generate_snapshots(
        &scenario.geometry,
        &source_set,
        &profile,
        scenario.snapshots,
        RngSeed::new(scenario.seed, snapshot_stream(0, 0, 0)),
    );
    let r_hat = sample_covariance(&x);

    let subspace: NoiseSubspace<f64> = match method {
        Method::Classical => classical_noise_subspace(&r_hat, sources),
        Method::Phase1 => phase1_noise_subspace(&strip_diagonal(&r_hat), sources),
        Method::Phase2 => phase1_noise_subspace(&strip_diagonal(&r_hat), sources).and_then(|p1| {
            let k = smallest_diag_index(&r_hat);
            let sigma2 = estimate_common_power(&r_hat, &p1, k)?;
            let ncov = estimate_noise_cov(sigma2, &build_qnun(&r_hat), k, r_hat.diag()[k]);
            phase2_noise_subspace(&r_hat, &ncov, sources)
        }),
    }
    .map_err(|e| AppError::Numerical(format!("{method} spectrum failed: {e}")))?;

    let ps = music_pseudospectrum(&subspace, &scenario.geometry, &scenario.grid);
    let mut out = open_output(&cli.out)?;
    writeln!(out, "theta_deg,s_value")?;
    for (theta, s) in ps.grid_deg().iter().zip(ps.values()) {
        writeln!(
            out,
            "{},{}",
            format_significant(*theta, CSV_DIGITS),
            format_significant(*s, CSV_DIGITS)
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Runs a single trial and reports each method's estimates side by side.
fn simulate(cli: &Cli) -> Result<(), AppError> {
    let resolved = resolved_scenario(cli, None)?;
    let scenario = &resolved.scenario;
    let profile = single_profile(&resolved);
    let snr_db = single_snr(cli, &resolved);

    let results = run_trial(scenario, &profile, snr_db, 0, snapshot_stream(0, 0, 0));

    let mut truth = scenario.doas_deg.clone();
    truth.sort_by(|a, b| a.partial_cmp(b).expect("finite directions"));

    let mut out = open_output(&cli.out)?;
    writeln!(
        out,
        "scenario: {}-sensor ULA, spacing {} wavelengths, {} snapshots",
        scenario.geometry.sensors(),
        scenario.geometry.spacing(),
        scenario.snapshots
    )?;
    writeln!(
        out,
        "truth_deg: {}; snr_db: {}; noise variances: {:?}",
        join_angles(&truth),
        snr_db,
        profile.variances()
    )?;
    let mut hard_failures = 0usize;
    for r in &results {
        match &r.error {
            Some(msg) => {
                hard_failures += 1;
                writeln!(out, "{:<9} failed: {msg}", r.method.as_str())?;
            }
            None => {
                let errs: Vec<f64> = r.sq_err_deg2.iter().map(|e| e.sqrt()).collect();
                let timing = if cli.timing {
                    format!("  ({:.2} ms)", r.elapsed.as_secs_f64() * 1e3)
                } else {
                    String::new()
                };
                writeln!(
                    out,
                    "{:<9} estimates_deg: {}  abs_err_deg: {}  fallback: {}{timing}",
                    r.method.as_str(),
                    join_angles(&r.doas_deg),
                    join_angles(&errs),
                    if r.fell_back { "yes" } else { "no" },
                )?;
            }
        }
    }
    out.flush()?;
    if hard_failures == results.len() {
        return Err(AppError::Numerical("every method failed on this trial".into()));
    }
    Ok(())
}

fn join_angles(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{v:.4}"))
        .collect::<Vec<_>>()
        .join(", ")
}

/// SNR sweep: `sweep_snr` for fixed-noise scenarios, the averaged
/// random-noise experiment otherwise. Backs `sweep`, `example1`, and
/// `example2`.
fn sweep(cli: &Cli, builtin: Option<ConfigFile>) -> Result<(), AppError> {
    let resolved = resolved_scenario(cli, builtin)?;
    let scenario = &resolved.scenario;

    let rows: Vec<SweepResult> = match &scenario.noise {
        NoiseSpec::Fixed(_) => {
            let rows = sweep_snr(scenario, &resolved.snr_db_list, resolved.k_trials)
                .map_err(|e| AppError::Config(e.to_string()))?;
            if let Some(path) = &cli.trials_out {
                let mut trials = open_output(&Some(path.clone()))?;
                write_trials_csv(&mut trials, &rows, scenario.doas_deg.len())?;
                trials.flush()?;
            }
            rows
        }
        NoiseSpec::Random(_) => {
            if cli.trials_out.is_some() {
                return Err(AppError::Config(
                    "per-trial output needs a fixed noise profile; random scenarios report averages".into(),
                ));
            }
            let result = random_q_experiment(scenario, &resolved.snr_db_list, resolved.k_trials)
                .map_err(|e| AppError::Config(e.to_string()))?;
            for (r, profile) in result.profiles.iter().enumerate() {
                log::debug!("realization {r}: variances {:?}", profile.variances());
            }
            if log::log_enabled!(log::Level::Debug) {
                for (r, sweep) in result.per_realization.iter().enumerate() {
                    for row in sweep {
                        log::debug!(
                            "realization {r}: snr {} {} rmse {}",
                            row.snr_db,
                            row.method,
                            row.rmse_deg
                        );
                    }
                }
            }
            result.averaged
        }
    };

    for row in &rows {
        if row.failures == row.trials {
            return Err(AppError::Numerical(format!(
                "every trial failed at {} dB for {}",
                row.snr_db, row.method
            )));
        }
        if row.failures > 0 {
            log::warn!(
                "{} of {} trials failed at {} dB for {}; RMSE covers the rest",
                row.failures,
                row.trials,
                row.snr_db,
                row.method
            );
        }
    }

    let mut out = open_output(&cli.out)?;
    write_sweep_csv(&mut out, &rows, cli.timing)?;
    out.flush()?;
    Ok(())
}
