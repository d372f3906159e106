use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

use roughbsde::cli::{run, Subcommand, EXIT_CONFIG, EXIT_FAILURE, EXIT_PASS};

const BASE: &str = r#"
probes = [[0.0, 0.0]]

[params]
beta = 0.3
q = 3.0
delta = 0.5
p = 2.5
d = 1

[[candidates]]
beta = 0.25
q = 6.0
delta = 0.5
p = 5.0
d = 2
expect = "accept"

[[candidates]]
beta = 0.3
q = 3.0
delta = 0.5
p = 4.0
d = 1
expect = "reject"
expect_code = "p_range"

[grid]
n = 64

[time]
steps = 32

[driver]
kind = "smooth_bump"
center = 0.0
width = 1.0
amplitude = 0.3

[nonlinearity]
kind = "linear_in_y"
k = 0.5

[terminal]
kind = "gaussian_bump"

[ensemble]
paths = 200
seed = 1

[output]
dir = "out"
"#;

struct Case {
    _dir: tempfile::TempDir,
    config: PathBuf,
    out: PathBuf,
}

fn case(toml: &str) -> Case {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.toml");
    std::fs::write(&config, toml).unwrap();
    let out = dir.path().join("out");
    Case { _dir: dir, config, out }
}

fn report(out: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

#[test]
fn malformed_toml_is_a_config_error() {
    let c = case("[params\nbeta = ");
    assert_eq!(run(Subcommand::ValidateParams, &c.config).code, EXIT_CONFIG);
}

#[test]
fn missing_config_is_a_config_error() {
    assert_eq!(run(Subcommand::ValidateParams, Path::new("/nonexistent/config.toml")).code, EXIT_CONFIG);
}

#[test]
fn inadmissible_main_parameters_are_a_config_error() {
    let c = case(&BASE.replacen("beta = 0.3", "beta = 0.6", 1));
    let out = run(Subcommand::SolvePde, &c.config);
    assert_eq!(out.code, EXIT_CONFIG, "{}", out.message);
}

#[test]
fn probe_outside_the_box_is_a_config_error() {
    let c = case(&BASE.replace("probes = [[0.0, 0.0]]", "probes = [[0.0, 50.0]]"));
    let out = run(Subcommand::FeynmanKac, &c.config);
    assert_eq!(out.code, EXIT_CONFIG, "{}", out.message);
}

#[test]
fn unknown_field_is_a_config_error() {
    let c = case(&BASE.replace("n = 64", "n = 64\nresolution = 3"));
    assert_eq!(run(Subcommand::ValidateParams, &c.config).code, EXIT_CONFIG);
}

#[test]
fn parameter_verdicts_follow_the_expectations() {
    let c = case(BASE);
    let out = run(Subcommand::ValidateParams, &c.config);
    assert_eq!(out.code, EXIT_PASS, "{}", out.message);
    let rep = report(&c.out);
    assert_eq!(rep["subcommand"], "validate-params");
    let verdicts = rep["verdicts"].as_array().unwrap();
    assert_eq!(verdicts.len(), 3);
    for v in verdicts {
        assert_eq!(v["pass"], true, "{v}");
        assert!(!v["paper_ref"].as_str().unwrap().is_empty());
    }
    assert!(c.out.join("parameter_verdicts.csv").exists());
}

#[test]
fn wrong_expectation_fails_the_run() {
    let c = case(&BASE.replace("expect_code = \"p_range\"", "expect_code = \"q_range\""));
    assert_eq!(run(Subcommand::ValidateParams, &c.config).code, EXIT_FAILURE);
    assert_eq!(report(&c.out)["pass"], false);
}

#[test]
fn free_heat_flow_passes_the_heat_check() {
    let toml = BASE
        .replace("kind = \"smooth_bump\"\ncenter = 0.0\nwidth = 1.0\namplitude = 0.3", "kind = \"zero\"\namplitude = 0.0")
        .replace("kind = \"linear_in_y\"\nk = 0.5", "kind = \"zero\"");
    let c = case(&toml);
    let out = run(Subcommand::SolvePde, &c.config);
    assert_eq!(out.code, EXIT_PASS, "{}", out.message);
    let rep = report(&c.out);
    let heat = rep["verdicts"].as_array().unwrap().iter().find(|v| v["name"] == "solve.heat_terminal").unwrap();
    assert_eq!(heat["pass"], true);
    assert!(c.out.join("picard_history.csv").exists());
}

#[test]
fn exhausted_iterations_are_a_numerical_failure_with_diagnostics() {
    let c = case(&format!("{BASE}\n[tolerances]\nmax_iter = 2\n"));
    let out = run(Subcommand::SolvePde, &c.config);
    assert_eq!(out.code, EXIT_FAILURE, "{}", out.message);
    let diag: Value = serde_json::from_str(&std::fs::read_to_string(c.out.join("error.json")).unwrap()).unwrap();
    assert_eq!(diag["stage"], "solve-pde");
}

#[test]
fn binary_reports_exit_codes() {
    let c = case(BASE);
    let bin = env!("CARGO_BIN_EXE_roughbsde");
    let ok = Command::new(bin).args(["validate-params"]).arg(&c.config).status().unwrap();
    assert_eq!(ok.code(), Some(EXIT_PASS));
    let bad = Command::new(bin).args(["validate-params", "/nonexistent/config.toml"]).status().unwrap();
    assert_eq!(bad.code(), Some(EXIT_CONFIG));
}
