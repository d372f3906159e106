//! Experiment configuration read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::drivers::{DriverKind, Modulation, RoughDriverSpec};
use crate::error::{Error, Result};
use crate::grid::{Field, GridSpec};
use crate::interp::InterpOrder;
use crate::mild::TimeGrid;
use crate::params::{BuiltinDriver, ParamCandidate, ParamSet};

// No `deny_unknown_fields` here or on `CandidateBlock`: serde rejects it in
// combination with `flatten`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamsBlock {
    pub beta: f64,
    pub q: f64,
    pub delta: f64,
    pub p: f64,
    pub d: usize,
    /// Defaults to `(1 - δ - β) / 4`.
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(rename = "T", default = "one")]
    pub horizon: f64,
}

fn one() -> f64 {
    1.0
}

impl ParamsBlock {
    pub fn candidate(&self) -> ParamCandidate {
        let c = ParamCandidate::new(self.beta, self.q, self.delta, self.p, self.d).with_horizon(self.horizon);
        match self.gamma {
            Some(g) => c.with_gamma(g),
            None => c,
        }
    }
}

/// A parameter tuple listed for `validate-params`, with an optional expected
/// verdict.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateBlock {
    #[serde(flatten)]
    pub params: ParamsBlock,
    #[serde(default)]
    pub expect: Option<Expectation>,
    /// Machine-readable rejection reason expected, e.g. `"beta_range"`.
    #[serde(default)]
    pub expect_code: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expectation {
    Accept,
    Reject,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    pub n: usize,
    #[serde(default = "default_half_width")]
    pub half_width: f64,
}

fn default_half_width() -> f64 {
    10.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeBlock {
    pub steps: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriverBlock {
    #[serde(flatten)]
    pub kind: DriverKind,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default)]
    pub modulation: Modulation,
    #[serde(default)]
    pub seed: u64,
}

impl DriverBlock {
    pub fn spec(&self) -> RoughDriverSpec {
        RoughDriverSpec { kind: self.kind, amplitude: self.amplitude, modulation: self.modulation, seed: self.seed }
    }
}

/// Named terminal conditions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TerminalSpec {
    /// `Φ(x) = χ(x) x`, one channel per coordinate.
    TaperedIdentity,
    /// `Φ(x) = χ(x) |x|²`
    TaperedSquare,
    /// `Φ(x) = exp(-|x - c|² / (2 w²))`
    GaussianBump {
        #[serde(default = "one")]
        width: f64,
        #[serde(default)]
        center: f64,
    },
}

impl TerminalSpec {
    pub fn field(&self, grid: &GridSpec) -> Result<Field> {
        let taper = crate::drivers::box_taper(grid);
        let d = grid.dim();
        match *self {
            TerminalSpec::TaperedIdentity => {
                Field::from_fn(*grid, d, |x, out| out.copy_from_slice(&x[..d])).mul_samples(&taper)
            }
            TerminalSpec::TaperedSquare => {
                Field::scalar_from_fn(*grid, |x| x.iter().map(|v| v * v).sum()).mul_samples(&taper)
            }
            TerminalSpec::GaussianBump { width, center } => {
                if !(width > 0.0) {
                    return Err(Error::InvalidArgument("bump width must be positive".into()));
                }
                Ok(Field::scalar_from_fn(*grid, |x| {
                    (-x.iter().map(|v| (v - center).powi(2)).sum::<f64>() / (2.0 * width * width)).exp()
                }))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleBlock {
    pub paths: usize,
    #[serde(default)]
    pub seed: u64,
    /// Path steps per field step for the bracket test.
    #[serde(default = "default_bracket_refinement")]
    pub bracket_refinement: usize,
    #[serde(default)]
    pub order: InterpOrder,
}

fn default_bracket_refinement() -> usize {
    32
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TolerancesBlock {
    #[serde(default = "default_picard_tol")]
    pub picard_tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Feynman-Kac slack beyond 3 standard errors, in units of `√dt`.
    #[serde(default = "default_fk_factor")]
    pub fk_sqrt_dt_factor: f64,
    #[serde(default = "default_epsilons")]
    pub uniqueness_epsilons: Vec<f64>,
    #[serde(default = "default_mode")]
    pub uniqueness_mode: i64,
}

fn default_picard_tol() -> f64 {
    1e-8
}
fn default_max_iter() -> usize {
    200
}
fn default_fk_factor() -> f64 {
    5.0
}
fn default_epsilons() -> Vec<f64> {
    vec![0.0, 0.1, 0.03, 0.01]
}
fn default_mode() -> i64 {
    3
}

impl Default for TolerancesBlock {
    fn default() -> Self {
        Self {
            picard_tol: default_picard_tol(),
            max_iter: default_max_iter(),
            fk_sqrt_dt_factor: default_fk_factor(),
            uniqueness_epsilons: default_epsilons(),
            uniqueness_mode: default_mode(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HaarBlock {
    #[serde(default = "default_haar_n")]
    pub grid_n: usize,
    #[serde(default = "default_haar_l")]
    pub half_width: f64,
    #[serde(default = "default_haar_level")]
    pub max_level: u32,
    #[serde(default = "default_bump")]
    pub bump_width: f64,
}

fn default_haar_n() -> usize {
    1 << 14
}
fn default_haar_l() -> f64 {
    16.0
}
fn default_haar_level() -> u32 {
    8
}
fn default_bump() -> f64 {
    0.1
}

impl Default for HaarBlock {
    fn default() -> Self {
        Self {
            grid_n: default_haar_n(),
            half_width: default_haar_l(),
            max_level: default_haar_level(),
            bump_width: default_bump(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub params: ParamsBlock,
    #[serde(default)]
    pub candidates: Vec<CandidateBlock>,
    pub grid: GridBlock,
    pub time: TimeBlock,
    pub driver: DriverBlock,
    #[serde(default = "default_nonlinearity")]
    pub nonlinearity: BuiltinDriver,
    pub terminal: TerminalSpec,
    pub ensemble: EnsembleBlock,
    /// `[s, x_1, …, x_d]` per point.
    #[serde(default)]
    pub probes: Vec<Vec<f64>>,
    #[serde(default)]
    pub tolerances: TolerancesBlock,
    #[serde(default)]
    pub haar: HaarBlock,
    pub output: OutputBlock,
}

fn default_nonlinearity() -> BuiltinDriver {
    BuiltinDriver::Zero
}

/// Validated handles derived from a config.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub param: ParamSet,
    pub grid: GridSpec,
    pub time: TimeGrid,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text)?;
        if cfg.output.dir.is_relative() {
            if let Some(parent) = path.parent() {
                cfg.output.dir = parent.join(&cfg.output.dir);
            }
        }
        Ok(cfg)
    }

    /// Cross-field checks; every failure here is a configuration error.
    pub fn resolve(&self) -> Result<Resolved> {
        let param = self.params.candidate().validate()?;
        let grid = GridSpec::new(self.params.d, self.grid.n, self.grid.half_width)?;
        let time = TimeGrid::new(param.horizon(), self.time.steps)?;
        if self.ensemble.paths == 0 {
            return Err(Error::InvalidArgument("ensemble.paths must be at least 1".into()));
        }
        if self.ensemble.bracket_refinement == 0 {
            return Err(Error::InvalidArgument("ensemble.bracket_refinement must be at least 1".into()));
        }
        let limit = grid.half_width() - 1.0;
        for (i, pt) in self.probes.iter().enumerate() {
            if pt.len() != self.params.d + 1 {
                return Err(Error::InvalidArgument(format!("probe {i} needs [s, x_1..x_d]")));
            }
            let s = pt[0];
            if !(0.0..param.horizon()).contains(&s) {
                return Err(Error::InvalidArgument(format!("probe {i}: s = {s} outside [0, T)")));
            }
            let k = time.nearest(s);
            if (time.node(k) - s).abs() > 1e-9 * param.horizon() {
                return Err(Error::InvalidArgument(format!("probe {i}: s = {s} is not a time node")));
            }
            if pt[1..].iter().any(|x| !(x.abs() < limit)) {
                return Err(Error::InvalidArgument(format!("probe {i} lies outside the box interior")));
            }
        }
        if self.tolerances.uniqueness_epsilons.iter().any(|e| !e.is_finite() || *e < 0.0) {
            return Err(Error::InvalidArgument("uniqueness_epsilons must be finite and non-negative".into()));
        }
        if !(self.tolerances.picard_tol > 0.0) {
            return Err(Error::InvalidArgument("picard_tol must be positive".into()));
        }
        GridSpec::line(self.haar.grid_n, self.haar.half_width)?;
        Ok(Resolved { param, grid, time })
    }
}
