//! Scenario files: JSON schema, defaults, aggregated validation, and
//! resolution into the core experiment types.
//!
//! The schema mirrors the experiment structure:
//!
//! ```json
//! {
//!   "array":     { "m": 8, "spacing": 0.5 },
//!   "sources":   { "doas_deg": [-3.0, 6.0] },
//!   "noise":     { "variances": [1, 1, 1, 1, 1, 20, 30, 50] },
//!   "snapshots": 500,
//!   "snr_db_list": [0, 5, 10, 15, 20],
//!   "k_trials":  500,
//!   "grid":      { "min_deg": -90.0, "max_deg": 90.0, "step_deg": 0.05 },
//!   "methods":   ["classical", "phase1", "phase2"],
//!   "seed":      12345
//! }
//! ```
//!
//! `noise` takes either `variances` (one per sensor) or
//! `random: { max_wnpr, realizations, floor }` for experiments that
//! average over drawn noise profiles. Only `array.m`, `sources.doas_deg`,
//! `noise` and `snapshots` are required; everything else defaults as
//! above. Validation reports every problem at once, never a partial
//! config.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use doa_core::array::{ArrayGeometry, NoiseProfile};
use doa_core::estimator::{GridSpec, Method};
use doa_core::harness::{NoiseSpec, RandomNoiseSpec, ScenarioConfig};

pub const DEFAULT_SEED: u64 = 12345;
pub const DEFAULT_SPACING: f64 = 0.5;
pub const DEFAULT_GRID_STEP_DEG: f64 = 0.05;
pub const DEFAULT_SNR_DB: [f64; 5] = [0.0, 5.0, 10.0, 15.0, 20.0];
pub const DEFAULT_K_TRIALS: usize = 500;
pub const DEFAULT_NOISE_FLOOR: f64 = 1.0;

/// Everything wrong with a config, reported together.
#[derive(Debug)]
pub struct ConfigError {
    pub problems: Vec<String>,
}

impl ConfigError {
    fn single(problem: String) -> Self {
        Self {
            problems: vec![problem],
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.problems.len() == 1 {
            return write!(f, "{}", self.problems[0]);
        }
        writeln!(f, "{} config problems:", self.problems.len())?;
        for p in &self.problems {
            writeln!(f, "  - {p}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub array: ArraySection,
    pub sources: SourcesSection,
    pub noise: NoiseSection,
    pub snapshots: usize,
    #[serde(default = "default_snr_list")]
    pub snr_db_list: Vec<f64>,
    #[serde(default = "default_k_trials")]
    pub k_trials: usize,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default = "default_methods")]
    pub methods: Vec<String>,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArraySection {
    pub m: usize,
    #[serde(default = "default_spacing")]
    pub spacing: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourcesSection {
    pub doas_deg: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variances: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random: Option<RandomSection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomSection {
    pub max_wnpr: f64,
    pub realizations: usize,
    #[serde(default = "default_floor")]
    pub floor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default = "default_grid_min")]
    pub min_deg: f64,
    #[serde(default = "default_grid_max")]
    pub max_deg: f64,
    #[serde(default = "default_grid_step")]
    pub step_deg: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            min_deg: default_grid_min(),
            max_deg: default_grid_max(),
            step_deg: default_grid_step(),
        }
    }
}

fn default_spacing() -> f64 {
    DEFAULT_SPACING
}
fn default_snr_list() -> Vec<f64> {
    DEFAULT_SNR_DB.to_vec()
}
fn default_k_trials() -> usize {
    DEFAULT_K_TRIALS
}
fn default_methods() -> Vec<String> {
    Method::ALL.iter().map(|m| m.as_str().to_string()).collect()
}
fn default_seed() -> u64 {
    DEFAULT_SEED
}
fn default_floor() -> f64 {
    DEFAULT_NOISE_FLOOR
}
fn default_grid_min() -> f64 {
    -90.0
}
fn default_grid_max() -> f64 {
    90.0
}
fn default_grid_step() -> f64 {
    DEFAULT_GRID_STEP_DEG
}

/// A config resolved into core types, plus the sweep parameters that
/// live outside `ScenarioConfig`.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub scenario: ScenarioConfig,
    pub snr_db_list: Vec<f64>,
    pub k_trials: usize,
}

/// Reads and parses a scenario file. Parse errors carry serde's
/// line/column diagnostics; the path is always named.
pub fn load(path: &Path) -> Result<ConfigFile, ConfigError> {
    let text = fs::read_to_string(path).map_err(|e| {
        ConfigError::single(format!("cannot read config {}: {e}", path.display()))
    })?;
    serde_json::from_str(&text).map_err(|e| {
        ConfigError::single(format!("cannot parse config {}: {e}", path.display()))
    })
}

/// Validates a parsed config and builds the core types. Collects every
/// violation before failing so one round trip fixes them all.
pub fn resolve(file: &ConfigFile) -> Result<Resolved, ConfigError> {
    let mut problems = Vec::new();

    let geometry = match ArrayGeometry::new(file.array.m, file.array.spacing) {
        Ok(g) => Some(g),
        Err(e) => {
            problems.push(format!("array: {e}"));
            None
        }
    };

    let doas = &file.sources.doas_deg;
    if doas.is_empty() {
        problems.push("sources.doas_deg: need at least one direction".into());
    }
    for &theta in doas {
        if !theta.is_finite() || theta <= -90.0 || theta >= 90.0 {
            problems.push(format!(
                "sources.doas_deg: {theta} outside the open interval (-90, 90)"
            ));
        }
    }
    for i in 0..doas.len() {
        for j in (i + 1)..doas.len() {
            if doas[i] == doas[j] {
                problems.push(format!("sources.doas_deg: DOAs must be distinct, {} repeats", doas[i]));
            }
        }
    }
    if !doas.is_empty() && doas.len() >= file.array.m {
        problems.push(format!(
            "sources.doas_deg: {} sources need more than {} sensors",
            doas.len(),
            file.array.m
        ));
    }

    let noise = match (&file.noise.variances, &file.noise.random) {
        (Some(variances), None) => {
            if variances.len() != file.array.m {
                problems.push(format!(
                    "noise.variances: expected {} entries, got {}",
                    file.array.m,
                    variances.len()
                ));
            }
            if variances.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
                problems.push("noise.variances: noise variances must be positive".into());
                None
            } else {
                match NoiseProfile::new(variances.clone()) {
                    Ok(p) => Some(NoiseSpec::Fixed(p)),
                    Err(e) => {
                        problems.push(format!("noise.variances: {e}"));
                        None
                    }
                }
            }
        }
        (None, Some(random)) => {
            if !(random.max_wnpr >= 1.0) || !random.max_wnpr.is_finite() {
                problems.push(format!(
                    "noise.random.max_wnpr: must be >= 1, got {}",
                    random.max_wnpr
                ));
            }
            if random.realizations == 0 {
                problems.push("noise.random.realizations: need at least 1".into());
            }
            if !(random.floor > 0.0) || !random.floor.is_finite() {
                problems.push(format!(
                    "noise.random.floor: must be positive, got {}",
                    random.floor
                ));
            }
            Some(NoiseSpec::Random(RandomNoiseSpec {
                max_wnpr: random.max_wnpr,
                realizations: random.realizations,
                floor: random.floor,
            }))
        }
        _ => {
            problems.push("noise: give exactly one of `variances` or `random`".into());
            None
        }
    };

    if file.snapshots == 0 {
        problems.push("snapshots: need at least 1".into());
    }
    if file.snr_db_list.is_empty() {
        problems.push("snr_db_list: need at least one SNR point".into());
    }
    for &snr in &file.snr_db_list {
        if !snr.is_finite() {
            problems.push(format!("snr_db_list: {snr} is not finite"));
        }
    }
    if file.k_trials == 0 {
        problems.push("k_trials: need at least 1".into());
    }

    let grid = match GridSpec::new(file.grid.min_deg, file.grid.max_deg, file.grid.step_deg) {
        Ok(g) => Some(g),
        Err(e) => {
            problems.push(format!("grid: {e}"));
            None
        }
    };

    let mut methods = Vec::new();
    if file.methods.is_empty() {
        problems.push("methods: need at least one method".into());
    }
    for name in &file.methods {
        match name.parse::<Method>() {
            Ok(m) if methods.contains(&m) => {
                problems.push(format!("methods: `{name}` listed twice"));
            }
            Ok(m) => methods.push(m),
            Err(_) => problems.push(format!(
                "methods: unknown method `{name}` (expected classical, phase1, or phase2)"
            )),
        }
    }

    if !problems.is_empty() {
        return Err(ConfigError { problems });
    }

    let scenario = ScenarioConfig {
        geometry: geometry.expect("validated above"),
        doas_deg: doas.clone(),
        noise: noise.expect("validated above"),
        snapshots: file.snapshots,
        methods,
        grid: grid.expect("validated above"),
        seed: file.seed,
    };
    // The harness re-checks cross-field invariants; surface them in the
    // same aggregated shape.
    scenario
        .validate()
        .map_err(|e| ConfigError::single(e.to_string()))?;

    Ok(Resolved {
        scenario,
        snr_db_list: file.snr_db_list.clone(),
        k_trials: file.k_trials,
    })
}

/// Built-in scenario: 8-sensor half-wavelength ULA, sources at -3 and
/// 6 degrees, 500 snapshots, strongly nonuniform fixed noise with WNPR
/// 50, K=500 trials over 0..20 dB.
pub fn example1() -> ConfigFile {
    ConfigFile {
        array: ArraySection {
            m: 8,
            spacing: DEFAULT_SPACING,
        },
        sources: SourcesSection {
            doas_deg: vec![-3.0, 6.0],
        },
        noise: NoiseSection {
            variances: Some(vec![1.0, 1.0, 1.0, 1.0, 1.0, 20.0, 30.0, 50.0]),
            random: None,
        },
        snapshots: 500,
        snr_db_list: DEFAULT_SNR_DB.to_vec(),
        k_trials: DEFAULT_K_TRIALS,
        grid: GridSection::default(),
        methods: default_methods(),
        seed: DEFAULT_SEED,
    }
}

/// Built-in scenario: same array and sources as [`example1`] but noise
/// variances drawn uniformly per realization with WNPR capped at 30,
/// averaged over 10 realizations of K=200 trials.
pub fn example2() -> ConfigFile {
    ConfigFile {
        noise: NoiseSection {
            variances: None,
            random: Some(RandomSection {
                max_wnpr: 30.0,
                realizations: 10,
                floor: DEFAULT_NOISE_FLOOR,
            }),
        },
        snr_db_list: vec![-5.0, 0.0, 5.0, 10.0, 15.0],
        k_trials: 200,
        ..example1()
    }
}
