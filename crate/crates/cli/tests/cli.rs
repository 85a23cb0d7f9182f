//! Black-box tests of the `doasim` binary: exit codes, diagnostics, and
//! output shapes.

use std::path::Path;
use std::process::{Command, Output};

fn doasim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_doasim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 stdout")
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("utf-8 stderr")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code present")
}

/// Small, fast scenario: 4 sensors, one source, coarse grid.
const SMALL: &str = r#"{
    "array": {"m": 4},
    "sources": {"doas_deg": [20.0]},
    "noise": {"variances": [1, 2, 3, 4]},
    "snapshots": 100,
    "snr_db_list": [10],
    "k_trials": 4,
    "grid": {"step_deg": 1.0}
}"#;

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("scenario.json");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn no_arguments_is_a_usage_error() {
    let out = doasim(&[]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("Usage"), "{}", stderr(&out));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = doasim(&["sweep", "--frobnicate"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn help_exits_zero() {
    let out = doasim(&["--help"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("doasim"));
}

#[test]
fn missing_config_file_names_the_path() {
    let out = doasim(&["sweep", "--config", "missing.json"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("missing.json"), "{}", stderr(&out));
}

#[test]
fn config_is_required_outside_the_examples() {
    for sub in ["sweep", "spectrum", "simulate"] {
        let out = doasim(&[sub]);
        assert_eq!(code(&out), 2, "{sub} must demand --config");
        assert!(stderr(&out).contains("--config"), "{}", stderr(&out));
    }
}

#[test]
fn example_subcommands_reject_a_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out = doasim(&["example1", "--config", &config]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("self-contained"), "{}", stderr(&out));
}

#[test]
fn zero_variance_is_rejected_with_the_contract_message() {
    let dir = tempfile::tempdir().unwrap();
    let bad = SMALL.replace("[1, 2, 3, 4]", "[0, 2, 3, 4]");
    let config = write_config(dir.path(), &bad);
    let out = doasim(&["sweep", "--config", &config]);
    assert_eq!(code(&out), 2);
    assert!(
        stderr(&out).contains("noise variances must be positive"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn duplicate_doas_are_rejected_with_the_contract_message() {
    let dir = tempfile::tempdir().unwrap();
    let bad = SMALL.replace("[20.0]", "[10.0, 10.0]");
    let config = write_config(dir.path(), &bad);
    let out = doasim(&["sweep", "--config", &config]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("DOAs must be distinct"), "{}", stderr(&out));
}

#[test]
fn config_problems_are_reported_together() {
    let dir = tempfile::tempdir().unwrap();
    let bad = SMALL
        .replace("[20.0]", "[10.0, 10.0]")
        .replace("[1, 2, 3, 4]", "[0, 2, 3, 4]");
    let config = write_config(dir.path(), &bad);
    let out = doasim(&["sweep", "--config", &config]);
    assert_eq!(code(&out), 2);
    let err = stderr(&out);
    assert!(err.contains("DOAs must be distinct"), "{err}");
    assert!(err.contains("noise variances must be positive"), "{err}");
}

#[test]
fn sweep_writes_the_documented_csv() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out = doasim(&["sweep", "--config", &config]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "snr_db,method,K,rmse_deg,fallback_rate,mean_trial_ms");
    assert_eq!(lines.len(), 1 + 3, "one SNR x three methods");
    for line in &lines[1..] {
        assert!(line.ends_with(','), "timing column empty by default: {line}");
    }
    assert!(stderr(&out).contains("seed = 12345"), "{}", stderr(&out));
}

#[test]
fn seed_override_is_logged() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out = doasim(&["sweep", "--config", &config, "--seed", "7"]);
    assert_eq!(code(&out), 0);
    assert!(stderr(&out).contains("seed = 7"), "{}", stderr(&out));
}

#[test]
fn timing_flag_fills_the_last_column() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out = doasim(&["sweep", "--config", &config, "--timing"]);
    assert_eq!(code(&out), 0);
    for line in stdout(&out).lines().skip(1) {
        assert!(!line.ends_with(','), "timing column requested: {line}");
    }
}

#[test]
fn method_flag_restricts_the_rows() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out = doasim(&["sweep", "--config", &config, "--method", "phase2"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().nth(1).unwrap().contains(",phase2,"));
}

#[test]
fn snr_conflicts_with_snr_list() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out = doasim(&[
        "sweep", "--config", &config, "--snr", "10", "--snr-list", "0,5",
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn spectrum_emits_angle_value_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out = doasim(&["spectrum", "--config", &config]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "theta_deg,s_value");
    assert_eq!(lines.len(), 1 + 179, "1 deg grid excludes both ends");
    for line in &lines[1..] {
        assert_eq!(line.split(',').count(), 2, "{line}");
    }
}

#[test]
fn spectrum_rejects_method_all() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out = doasim(&["spectrum", "--config", &config, "--method", "all"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn simulate_reports_every_method() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out = doasim(&["simulate", "--config", &config]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    for needle in ["classical", "phase1", "phase2", "truth_deg"] {
        assert!(text.contains(needle), "missing {needle} in: {text}");
    }
}

#[test]
fn out_flag_writes_the_file_instead_of_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let csv = dir.path().join("rows.csv");
    let out = doasim(&["sweep", "--config", &config, "--out", csv.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).is_empty());
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("snr_db,method,"));
}

#[test]
fn trials_out_writes_per_trial_rows() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let trials = dir.path().join("trials.csv");
    let out = doasim(&[
        "sweep", "--config", &config, "--trials-out", trials.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = std::fs::read_to_string(&trials).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "trial,method,theta_hat_1,sq_err_1,fallback");
    // 4 trials x 3 methods plus the header and one SNR marker comment.
    assert_eq!(lines.len(), 2 + 12);
}

#[test]
fn random_scenarios_refuse_per_trial_output() {
    let dir = tempfile::tempdir().unwrap();
    let random = SMALL.replace(
        r#""noise": {"variances": [1, 2, 3, 4]}"#,
        r#""noise": {"random": {"max_wnpr": 4, "realizations": 2}}"#,
    );
    let config = write_config(dir.path(), &random);
    let trials = dir.path().join("trials.csv");
    let out = doasim(&[
        "sweep", "--config", &config, "--trials-out", trials.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("fixed noise"), "{}", stderr(&out));
}

#[test]
fn identical_invocations_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let a = doasim(&["sweep", "--config", &config]);
    let b = doasim(&["sweep", "--config", &config]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
}
