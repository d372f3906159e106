//! Batch experiment runner: `roughbsde <subcommand> <config.toml>`.
//!
//! Every run writes `report.json` plus one CSV per data product into the
//! configured output directory. Wall-clock data lives under the `timestamp`
//! key of the report so that two runs of one config compare byte for byte
//! once that key is dropped.

pub mod config;
mod experiments;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::ValueEnum;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};

pub use config::ExperimentConfig;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_FAILURE: i32 = 3;

/// Caps the rayon worker count when set to a positive integer.
pub const THREADS_ENV: &str = "ROUGHBSDE_THREADS";

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    ValidateParams,
    SolvePde,
    ChainRuleTest,
    ConsistencyTest,
    BsdeVerify,
    FeynmanKac,
    HaarDemo,
    FullSuite,
}

impl Subcommand {
    pub fn name(&self) -> &'static str {
        match self {
            Subcommand::ValidateParams => "validate-params",
            Subcommand::SolvePde => "solve-pde",
            Subcommand::ChainRuleTest => "chain-rule-test",
            Subcommand::ConsistencyTest => "consistency-test",
            Subcommand::BsdeVerify => "bsde-verify",
            Subcommand::FeynmanKac => "feynman-kac",
            Subcommand::HaarDemo => "haar-demo",
            Subcommand::FullSuite => "full-suite",
        }
    }
}

/// One checked property. `paper_ref` names the property being checked.
#[derive(Clone, Debug, Serialize)]
pub struct VerdictRecord {
    pub name: String,
    pub paper_ref: String,
    pub pass: bool,
    pub value: f64,
    pub detail: String,
}

/// Collects verdicts, JSON sections and CSV products for one run.
#[derive(Debug, Default)]
pub struct Reporter {
    sections: BTreeMap<String, Value>,
    verdicts: Vec<VerdictRecord>,
    csvs: BTreeMap<String, String>,
    timings: BTreeMap<String, f64>,
}

impl Reporter {
    pub fn verdict(&mut self, name: &str, paper_ref: &str, pass: bool, value: f64, detail: impl Into<String>) {
        self.verdicts.push(VerdictRecord {
            name: name.into(),
            paper_ref: paper_ref.into(),
            pass,
            value: if value.is_finite() { value } else { f64::MAX },
            detail: detail.into(),
        });
    }

    pub fn section(&mut self, name: &str, value: impl Serialize) -> Result<()> {
        let v = serde_json::to_value(value).map_err(|e| Error::Parse(e.to_string()))?;
        self.sections.insert(name.into(), v);
        Ok(())
    }

    pub fn csv(&mut self, file: &str, contents: String) {
        self.csvs.insert(file.into(), contents);
    }

    pub fn timing(&mut self, name: &str, seconds: f64) {
        self.timings.insert(name.into(), seconds);
    }

    pub fn verdicts(&self) -> &[VerdictRecord] {
        &self.verdicts
    }

    pub fn pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    fn write(&self, dir: &Path, cmd: Subcommand, config: &ExperimentConfig) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let report = json!({
            "subcommand": cmd.name(),
            "config": config,
            "pass": self.pass(),
            "verdicts": self.verdicts,
            "sections": self.sections,
            "csv_files": self.csvs.keys().collect::<Vec<_>>(),
            "timestamp": {
                "unix_seconds": SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
                "wall_time_s": self.timings,
            },
        });
        let text = serde_json::to_string_pretty(&report).map_err(|e| Error::Parse(e.to_string()))?;
        std::fs::write(dir.join("report.json"), text + "\n")?;
        for (name, body) in &self.csvs {
            std::fs::write(dir.join(name), body)?;
        }
        Ok(())
    }
}

/// Applies [`THREADS_ENV`] to the global rayon pool. Has no effect once the
/// pool is built.
pub fn init_threads() {
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

/// Outcome of [`run`] for callers that want more than the exit code.
#[derive(Debug)]
pub struct RunOutcome {
    pub code: i32,
    pub output_dir: Option<PathBuf>,
    pub message: String,
}

fn diagnostic(dir: &Path, stage: &str, err: &Error) {
    let body = json!({ "stage": stage, "error": err.to_string(), "kind": format!("{err:?}") });
    let _ = std::fs::create_dir_all(dir)
        .and_then(|_| std::fs::write(dir.join("error.json"), serde_json::to_string_pretty(&body).unwrap_or_default() + "\n"));
}

/// Runs one subcommand and writes its artifacts. Exit code 0 when every
/// verdict passes, 2 on a configuration error, 3 on a numerical failure or a
/// failed verdict.
pub fn run(cmd: Subcommand, config_path: &Path) -> RunOutcome {
    let cfg = match ExperimentConfig::load(config_path) {
        Ok(c) => c,
        Err(e) => return RunOutcome { code: EXIT_CONFIG, output_dir: None, message: format!("config error: {e}") },
    };
    let dir = cfg.output.dir.clone();
    let started = Instant::now();
    let setup = match experiments::Setup::new(&cfg, cmd) {
        Ok(s) => s,
        Err(e) => {
            diagnostic(&dir, "config", &e);
            return RunOutcome { code: EXIT_CONFIG, output_dir: Some(dir), message: format!("config error: {e}") };
        }
    };
    let mut rep = Reporter::default();
    if let Err(e) = experiments::dispatch(cmd, &setup, &mut rep) {
        diagnostic(&dir, cmd.name(), &e);
        return RunOutcome { code: EXIT_FAILURE, output_dir: Some(dir), message: format!("numerical failure: {e}") };
    }
    rep.timing("total", started.elapsed().as_secs_f64());
    if let Err(e) = rep.write(&dir, cmd, &cfg) {
        return RunOutcome { code: EXIT_FAILURE, output_dir: Some(dir), message: format!("cannot write report: {e}") };
    }
    let failed: Vec<&str> = rep.verdicts().iter().filter(|v| !v.pass).map(|v| v.name.as_str()).collect();
    if failed.is_empty() {
        RunOutcome { code: EXIT_PASS, output_dir: Some(dir), message: format!("{} checks passed", rep.verdicts().len()) }
    } else {
        RunOutcome { code: EXIT_FAILURE, output_dir: Some(dir), message: format!("failed: {}", failed.join(", ")) }
    }
}
