//! Seeded Monte Carlo experiments comparing the estimation methods.
//!
//! Reproducibility contract: given the same `ScenarioConfig` (seed
//! included), every sweep produces bit-identical results regardless of
//! thread count. Each trial draws its snapshots from an independent
//! counter-based RNG stream keyed by `(realization, SNR index, trial)`,
//! trials are dispatched in index order, and aggregation folds results
//! serially, so no floating-point sum depends on scheduling. Wall-clock
//! timings are measured per trial but kept out of the CSV by default for
//! the same reason; opt in via the writer's timing flag.
//!
//! The experiment layer works in `f64`: results are exchanged as CSV and
//! the 12-significant-digit format below is part of the contract.

use std::io::{self, Write};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::array::{signal_power_for_snr, ArrayGeometry, NoiseProfile, SourceSet};
use crate::estimator::{estimate_doa, GridSpec, Method};
use crate::snapshots::{generate_snapshots, sample_covariance, RngSeed};

/// Errors raised before any trial runs.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid scenario: {context}")]
    InvalidScenario { context: String },
}

/// Per-sensor noise description of a scenario: one fixed profile, or a
/// family of random profiles drawn per realization.
#[derive(Clone, Debug)]
pub enum NoiseSpec {
    Fixed(NoiseProfile<f64>),
    Random(RandomNoiseSpec),
}

/// Random noise-profile family: variances drawn independently and
/// uniformly from `[floor, floor·max_wnpr]`, which bounds the worst-case
/// noise power ratio of every draw by `max_wnpr`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RandomNoiseSpec {
    pub max_wnpr: f64,
    pub realizations: usize,
    pub floor: f64,
}

impl RandomNoiseSpec {
    fn validate(&self) -> Result<(), HarnessError> {
        if !(self.max_wnpr >= 1.0) || !self.max_wnpr.is_finite() {
            return Err(HarnessError::InvalidScenario {
                context: format!("max WNPR must be >= 1, got {}", self.max_wnpr),
            });
        }
        if self.realizations == 0 {
            return Err(HarnessError::InvalidScenario {
                context: "need at least one noise realization".into(),
            });
        }
        if !(self.floor > 0.0) || !self.floor.is_finite() {
            return Err(HarnessError::InvalidScenario {
                context: format!("noise floor must be positive, got {}", self.floor),
            });
        }
        Ok(())
    }
}

/// Complete description of one experiment.
#[derive(Clone, Debug)]
pub struct ScenarioConfig {
    pub geometry: ArrayGeometry<f64>,
    /// True source directions; per-source powers are equal and derived
    /// from the SNR of each sweep point.
    pub doas_deg: Vec<f64>,
    pub noise: NoiseSpec,
    /// Snapshots per trial.
    pub snapshots: usize,
    pub methods: Vec<Method>,
    pub grid: GridSpec<f64>,
    pub seed: u64,
}

impl ScenarioConfig {
    /// Checks every cross-field invariant; sweep entry points call this
    /// before spawning work.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let m = self.geometry.sensors();
        if self.doas_deg.len() >= m {
            return Err(HarnessError::InvalidScenario {
                context: format!("{} sources need more than {} sensors", self.doas_deg.len(), m),
            });
        }
        SourceSet::equal_power(self.doas_deg.clone(), 1.0).map_err(|e| {
            HarnessError::InvalidScenario {
                context: e.to_string(),
            }
        })?;
        match &self.noise {
            NoiseSpec::Fixed(profile) => {
                if profile.sensors() != m {
                    return Err(HarnessError::InvalidScenario {
                        context: format!(
                            "noise profile covers {} sensors but the array has {}",
                            profile.sensors(),
                            m
                        ),
                    });
                }
            }
            NoiseSpec::Random(spec) => spec.validate()?,
        }
        if self.snapshots == 0 {
            return Err(HarnessError::InvalidScenario {
                context: "need at least one snapshot per trial".into(),
            });
        }
        if self.methods.is_empty() {
            return Err(HarnessError::InvalidScenario {
                context: "need at least one method".into(),
            });
        }
        for (i, a) in self.methods.iter().enumerate() {
            if self.methods[..i].contains(a) {
                return Err(HarnessError::InvalidScenario {
                    context: format!("method {a} listed twice"),
                });
            }
        }
        Ok(())
    }
}

/// One method's result on one trial.
#[derive(Clone, Debug)]
pub struct TrialResult {
    pub trial: usize,
    pub method: Method,
    /// Estimated directions, ascending; empty on a hard estimator failure.
    pub doas_deg: Vec<f64>,
    /// Squared errors against the ascending true directions.
    pub sq_err_deg2: Vec<f64>,
    pub fell_back: bool,
    pub elapsed: Duration,
    /// Hard estimator failure, recorded instead of aborting the sweep.
    pub error: Option<String>,
}

/// Aggregate over one (SNR, method) sweep point.
#[derive(Clone, Debug)]
pub struct SweepResult {
    pub snr_db: f64,
    pub method: Method,
    /// Trials aggregated into this row.
    pub trials: usize,
    pub rmse_deg: f64,
    pub fallback_rate: f64,
    pub mean_trial_ms: f64,
    pub failures: usize,
    /// Per-trial detail; empty for rows averaged across realizations.
    pub trial_results: Vec<TrialResult>,
}

/// Result of a random-noise experiment.
#[derive(Clone, Debug)]
pub struct RandomQResult {
    /// The drawn noise profile of every realization.
    pub profiles: Vec<NoiseProfile<f64>>,
    /// Full sweep per realization.
    pub per_realization: Vec<Vec<SweepResult>>,
    /// Per (SNR, method) arithmetic mean of the realization RMSEs.
    pub averaged: Vec<SweepResult>,
}

/// Snapshot RNG stream id: realization in bits 48..62, SNR index in bits
/// 32..47, trial in bits 0..31. Bit 63 stays clear; noise-profile draws
/// use it to occupy a disjoint family, see [`noise_draw_stream`].
pub fn snapshot_stream(realization: usize, snr_index: usize, trial: usize) -> u64 {
    assert!(realization < (1 << 15), "realization index too large");
    assert!(snr_index < (1 << 16), "SNR index too large");
    assert!((trial as u64) < (1u64 << 32), "trial index too large");
    ((realization as u64) << 48) | ((snr_index as u64) << 32) | trial as u64
}

/// RNG stream id of a realization's noise-profile draw.
pub fn noise_draw_stream(realization: usize) -> u64 {
    (1u64 << 63) | realization as u64
}

/// Draws one random noise profile for `realization`.
pub fn draw_noise_profile(
    seed: u64,
    realization: usize,
    sensors: usize,
    spec: &RandomNoiseSpec,
) -> NoiseProfile<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(noise_draw_stream(realization));
    let variances: Vec<f64> = (0..sensors)
        .map(|_| rng.random_range(spec.floor..=spec.floor * spec.max_wnpr))
        .collect();
    let profile = NoiseProfile::new(variances).expect("drawn variances are positive");
    debug_assert!(profile.wnpr() <= spec.max_wnpr);
    profile
}

/// Runs every configured method on one freshly synthesized snapshot set.
/// All methods see the same snapshots, so comparisons are paired.
pub fn run_trial(
    config: &ScenarioConfig,
    noise: &NoiseProfile<f64>,
    snr_db: f64,
    trial: usize,
    stream_id: u64,
) -> Vec<TrialResult> {
    let power = signal_power_for_snr(snr_db, noise);
    let sources = SourceSet::equal_power(config.doas_deg.clone(), power)
        .expect("validated directions and positive power");
    let x = generate_snapshots(
        &config.geometry,
        &sources,
        noise,
        config.snapshots,
        RngSeed::new(config.seed, stream_id),
    );
    let r_hat = sample_covariance(&x);

    let mut truth = config.doas_deg.clone();
    truth.sort_by(|a, b| a.partial_cmp(b).expect("finite directions"));

    config
        .methods
        .iter()
        .map(|&method| {
            let started = std::time::Instant::now();
            let outcome = estimate_doa(&r_hat, truth.len(), &config.geometry, &config.grid, method);
            let elapsed = started.elapsed();
            match outcome {
                Ok(out) => {
                    let doas = out.estimate.doas_deg().to_vec();
                    let sq_err = doas
                        .iter()
                        .zip(&truth)
                        .map(|(est, tru)| (est - tru) * (est - tru))
                        .collect();
                    TrialResult {
                        trial,
                        method,
                        doas_deg: doas,
                        sq_err_deg2: sq_err,
                        fell_back: out.fell_back,
                        elapsed,
                        error: None,
                    }
                }
                Err(err) => TrialResult {
                    trial,
                    method,
                    doas_deg: Vec::new(),
                    sq_err_deg2: Vec::new(),
                    fell_back: false,
                    elapsed,
                    error: Some(err.to_string()),
                },
            }
        })
        .collect()
}

/// RMSE in degrees over the non-failed trials of one sweep point:
/// `√( Σ_trials Σ_sources sq_err / (trials·sources) )`.
pub fn rmse_from_trials(trials: &[TrialResult], source_count: usize) -> f64 {
    let mut sum = 0.0;
    let mut counted = 0usize;
    for t in trials {
        if t.error.is_none() {
            sum += t.sq_err_deg2.iter().sum::<f64>();
            counted += 1;
        }
    }
    if counted == 0 {
        return f64::NAN;
    }
    (sum / (counted * source_count) as f64).sqrt()
}

/// One SNR sweep against a fixed noise profile. `realization` keys the
/// RNG streams and is 0 for plain fixed-noise experiments.
fn sweep_profile(
    config: &ScenarioConfig,
    noise: &NoiseProfile<f64>,
    realization: usize,
    snr_db_list: &[f64],
    k_trials: usize,
) -> Vec<SweepResult> {
    let sources = config.doas_deg.len();
    let mut out = Vec::with_capacity(snr_db_list.len() * config.methods.len());

    for (snr_index, &snr_db) in snr_db_list.iter().enumerate() {
        let rows: Vec<Vec<TrialResult>> = (0..k_trials)
            .into_par_iter()
            .map(|trial| {
                run_trial(
                    config,
                    noise,
                    snr_db,
                    trial,
                    snapshot_stream(realization, snr_index, trial),
                )
            })
            .collect();

        for (mi, &method) in config.methods.iter().enumerate() {
            let trial_results: Vec<TrialResult> =
                rows.iter().map(|per_trial| per_trial[mi].clone()).collect();
            let failures = trial_results.iter().filter(|t| t.error.is_some()).count();
            if failures > 0 {
                log::warn!("{failures} of {k_trials} trials failed at {snr_db} dB for {method}");
            }
            let fallbacks = trial_results.iter().filter(|t| t.fell_back).count();
            let total_ms: f64 = trial_results
                .iter()
                .map(|t| t.elapsed.as_secs_f64() * 1e3)
                .sum();
            out.push(SweepResult {
                snr_db,
                method,
                trials: k_trials,
                rmse_deg: rmse_from_trials(&trial_results, sources),
                fallback_rate: fallbacks as f64 / k_trials as f64,
                mean_trial_ms: total_ms / k_trials as f64,
                failures,
                trial_results,
            });
        }
    }
    out
}

/// SNR sweep of a fixed-noise scenario: `k_trials` Monte Carlo trials per
/// SNR point, every configured method on identical snapshots.
pub fn sweep_snr(
    config: &ScenarioConfig,
    snr_db_list: &[f64],
    k_trials: usize,
) -> Result<Vec<SweepResult>, HarnessError> {
    config.validate()?;
    if snr_db_list.is_empty() || k_trials == 0 {
        return Err(HarnessError::InvalidScenario {
            context: "need at least one SNR point and one trial".into(),
        });
    }
    let profile = match &config.noise {
        NoiseSpec::Fixed(profile) => profile,
        NoiseSpec::Random(_) => {
            return Err(HarnessError::InvalidScenario {
                context: "SNR sweep needs a fixed noise profile; use the random-noise experiment".into(),
            })
        }
    };
    Ok(sweep_profile(config, profile, 0, snr_db_list, k_trials))
}

/// Random-noise experiment: draws one noise profile per realization,
/// sweeps each, and averages the per-realization RMSE per (SNR, method).
pub fn random_q_experiment(
    config: &ScenarioConfig,
    snr_db_list: &[f64],
    k_trials: usize,
) -> Result<RandomQResult, HarnessError> {
    config.validate()?;
    if snr_db_list.is_empty() || k_trials == 0 {
        return Err(HarnessError::InvalidScenario {
            context: "need at least one SNR point and one trial".into(),
        });
    }
    let spec = match &config.noise {
        NoiseSpec::Random(spec) => *spec,
        NoiseSpec::Fixed(_) => {
            return Err(HarnessError::InvalidScenario {
                context: "random-noise experiment needs a random noise spec".into(),
            })
        }
    };

    let sensors = config.geometry.sensors();
    let profiles: Vec<NoiseProfile<f64>> = (0..spec.realizations)
        .map(|r| draw_noise_profile(config.seed, r, sensors, &spec))
        .collect();
    let per_realization: Vec<Vec<SweepResult>> = profiles
        .iter()
        .enumerate()
        .map(|(r, profile)| sweep_profile(config, profile, r, snr_db_list, k_trials))
        .collect();

    // Per-realization sweeps emit rows in identical (SNR, method) order,
    // so averaging is a column-wise fold.
    let rows = per_realization[0].len();
    let mut averaged = Vec::with_capacity(rows);
    for row in 0..rows {
        let template = &per_realization[0][row];
        let n = spec.realizations as f64;
        let mut rmse_sum = 0.0;
        let mut fallback_sum = 0.0;
        let mut ms_sum = 0.0;
        let mut failures = 0usize;
        for sweep in &per_realization {
            debug_assert_eq!(sweep[row].snr_db, template.snr_db);
            debug_assert_eq!(sweep[row].method, template.method);
            rmse_sum += sweep[row].rmse_deg;
            fallback_sum += sweep[row].fallback_rate;
            ms_sum += sweep[row].mean_trial_ms;
            failures += sweep[row].failures;
        }
        averaged.push(SweepResult {
            snr_db: template.snr_db,
            method: template.method,
            trials: k_trials * spec.realizations,
            rmse_deg: rmse_sum / n,
            fallback_rate: fallback_sum / n,
            mean_trial_ms: ms_sum / n,
            failures,
            trial_results: Vec::new(),
        });
    }

    Ok(RandomQResult {
        profiles,
        per_realization,
        averaged,
    })
}

/// Formats with a fixed number of significant digits, plain decimal
/// notation inside a sane exponent window and scientific outside of it.
/// Exact zero prints as `0`.
pub fn format_significant(x: f64, digits: usize) -> String {
    assert!(digits >= 1);
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if exp < -4 || exp >= digits as i32 {
        format!("{:.*e}", digits - 1, x)
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        format!("{:.*}", decimals, x)
    }
}

/// Significant digits carried by every CSV number.
pub const CSV_DIGITS: usize = 12;

/// Writes sweep rows as CSV. The timing column is left empty unless
/// `include_timing` is set, keeping the default output a pure function
/// of the scenario seed.
pub fn write_sweep_csv<W: Write>(
    out: &mut W,
    rows: &[SweepResult],
    include_timing: bool,
) -> io::Result<()> {
    writeln!(out, "snr_db,method,K,rmse_deg,fallback_rate,mean_trial_ms")?;
    for row in rows {
        let timing = if include_timing {
            format_significant(row.mean_trial_ms, CSV_DIGITS)
        } else {
            String::new()
        };
        writeln!(
            out,
            "{},{},{},{},{},{}",
            format_significant(row.snr_db, CSV_DIGITS),
            row.method.as_str(),
            row.trials,
            format_significant(row.rmse_deg, CSV_DIGITS),
            format_significant(row.fallback_rate, CSV_DIGITS),
            timing,
        )?;
    }
    Ok(())
}

/// Writes per-trial detail rows as CSV, one block per sweep point with a
/// `#`-prefixed SNR comment separating blocks. Failed trials keep their
/// row with empty estimate columns.
pub fn write_trials_csv<W: Write>(
    out: &mut W,
    rows: &[SweepResult],
    source_count: usize,
) -> io::Result<()> {
    write!(out, "trial,method")?;
    for l in 1..=source_count {
        write!(out, ",theta_hat_{l}")?;
    }
    for l in 1..=source_count {
        write!(out, ",sq_err_{l}")?;
    }
    writeln!(out, ",fallback")?;

    let mut last_snr: Option<f64> = None;
    for row in rows {
        if last_snr != Some(row.snr_db) {
            writeln!(out, "# snr_db = {}", format_significant(row.snr_db, CSV_DIGITS))?;
            last_snr = Some(row.snr_db);
        }
        for t in &row.trial_results {
            write!(out, "{},{}", t.trial, t.method.as_str())?;
            for l in 0..source_count {
                match t.doas_deg.get(l) {
                    Some(&v) => write!(out, ",{}", format_significant(v, CSV_DIGITS))?,
                    None => write!(out, ",")?,
                }
            }
            for l in 0..source_count {
                match t.sq_err_deg2.get(l) {
                    Some(&v) => write!(out, ",{}", format_significant(v, CSV_DIGITS))?,
                    None => write!(out, ",")?,
                }
            }
            writeln!(out, ",{}", u8::from(t.fell_back))?;
        }
    }
    Ok(())
}
