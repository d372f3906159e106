//! Python bindings: parameter validation, fields on the periodic box, certified
//! drifts, the semilinear PDE solver, Feynman-Kac estimates and the batch
//! experiment runner.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use roughbsde::bsde::BsdeModel;
use roughbsde::cli::config::TerminalSpec;
use roughbsde::cli::{run, Subcommand};
use roughbsde::drivers::{make_driver, CertifiedDriver, DriverKind, Modulation, RoughDriverSpec};
use roughbsde::error::Error;
use roughbsde::grid::{Field as CoreField, GridSpec};
use roughbsde::haar::{haar_project, mollify_project};
use roughbsde::interp::InterpOrder;
use roughbsde::mild::{solve_semilinear_u, PicardOptions, SolveReport, TimeField, TimeGrid};
use roughbsde::occupation::EnsembleSpec;
use roughbsde::params::{contraction_rho, BuiltinDriver, ParamCandidate, ParamSet};
use roughbsde::spectral::{bessel_potential, gradient, heat_semigroup, sobolev_norm, SobolevIndex};

/// Bad input becomes `ValueError`; numerical failures become `RuntimeError`.
fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidGrid(_)
        | Error::Mismatch(_)
        | Error::InvalidExponent(_)
        | Error::InvalidHolderExponent(_)
        | Error::NegativeTime(_)
        | Error::InvalidArgument(_)
        | Error::Params(_)
        | Error::UncertifiedDriver(_)
        | Error::Haar(_)
        | Error::Parse(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn json_to_py<'py>(py: Python<'py>, value: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    PyModule::import(py, "json")?.call_method1("loads", (text,))
}

/// A validated parameter set. Raises `ValueError` outside the admissible region.
#[pyclass(frozen, skip_from_py_object, name = "Params")]
#[derive(Clone)]
struct PyParams {
    inner: ParamSet,
}

#[pymethods]
impl PyParams {
    #[new]
    #[pyo3(signature = (beta, q, delta, p, d, gamma=None, horizon=1.0))]
    fn new(beta: f64, q: f64, delta: f64, p: f64, d: usize, gamma: Option<f64>, horizon: f64) -> PyResult<Self> {
        let mut c = ParamCandidate::new(beta, q, delta, p, d).with_horizon(horizon);
        if let Some(g) = gamma {
            c = c.with_gamma(g);
        }
        c.validate()
            .map(|inner| Self { inner })
            .map_err(|r| PyValueError::new_err(format!("{}: {}", r.code.as_str(), r.message)))
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.inner.beta()
    }
    #[getter]
    fn q(&self) -> f64 {
        self.inner.q()
    }
    #[getter]
    fn delta(&self) -> f64 {
        self.inner.delta()
    }
    #[getter]
    fn p(&self) -> f64 {
        self.inner.p()
    }
    #[getter]
    fn d(&self) -> usize {
        self.inner.d()
    }
    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma()
    }
    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha()
    }
    #[getter]
    fn horizon(&self) -> f64 {
        self.inner.horizon()
    }

    /// Smallest dyadic weight making the Picard map a contraction for `c`.
    fn contraction_rho(&self, c: f64) -> PyResult<f64> {
        contraction_rho(&self.inner, c).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!("Params(beta={}, q={}, delta={}, p={}, d={}, gamma={}, horizon={})", p.beta(), p.q(), p.delta(), p.p(), p.d(), p.gamma(), p.horizon())
    }
}

/// `(accepted, code, message)` without raising.
#[pyfunction]
#[pyo3(signature = (beta, q, delta, p, d, gamma=None, horizon=1.0))]
fn validate_params(
    beta: f64,
    q: f64,
    delta: f64,
    p: f64,
    d: usize,
    gamma: Option<f64>,
    horizon: f64,
) -> (bool, Option<String>, String) {
    let mut c = ParamCandidate::new(beta, q, delta, p, d).with_horizon(horizon);
    if let Some(g) = gamma {
        c = c.with_gamma(g);
    }
    match c.validate() {
        Ok(_) => (true, None, String::new()),
        Err(r) => (false, Some(r.code.as_str().to_string()), r.message),
    }
}

/// Periodic box `[-L, L)^d` sampled with `n` nodes per axis.
#[pyclass(frozen, skip_from_py_object, name = "Grid")]
#[derive(Clone)]
struct PyGrid {
    inner: GridSpec,
}

#[pymethods]
impl PyGrid {
    #[new]
    #[pyo3(signature = (n, half_width, dim=1))]
    fn new(n: usize, half_width: f64, dim: usize) -> PyResult<Self> {
        GridSpec::new(dim, n, half_width).map(|inner| Self { inner }).map_err(to_py)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }
    #[getter]
    fn half_width(&self) -> f64 {
        self.inner.half_width()
    }
    #[getter]
    fn dx(&self) -> f64 {
        self.inner.dx()
    }

    /// Node coordinates along one axis.
    fn coords(&self) -> Vec<f64> {
        (0..self.inner.n()).map(|i| self.inner.coord(i)).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Grid samples of a vector-valued field, channel-major.
#[pyclass(frozen, skip_from_py_object, name = "Field")]
#[derive(Clone)]
struct PyField {
    inner: CoreField,
}

impl From<CoreField> for PyField {
    fn from(inner: CoreField) -> Self {
        Self { inner }
    }
}

#[pymethods]
impl PyField {
    #[new]
    #[pyo3(signature = (grid, values, channels=1))]
    fn new(grid: &PyGrid, values: Vec<f64>, channels: usize) -> PyResult<Self> {
        CoreField::from_values(grid.inner, channels, values).map(Self::from).map_err(to_py)
    }

    /// `exp(-|x - center|² / (2 width²))`
    #[staticmethod]
    #[pyo3(signature = (grid, width=1.0, center=0.0))]
    fn gaussian(grid: &PyGrid, width: f64, center: f64) -> PyResult<Self> {
        TerminalSpec::GaussianBump { width, center }.field(&grid.inner).map(Self::from).map_err(to_py)
    }

    #[getter]
    fn channels(&self) -> usize {
        self.inner.channels()
    }

    #[getter]
    fn grid(&self) -> PyGrid {
        PyGrid { inner: *self.inner.grid() }
    }

    fn values(&self) -> Vec<f64> {
        self.inner.values().to_vec()
    }

    fn sup_norm(&self) -> f64 {
        self.inner.sup_norm()
    }

    /// `‖f‖_{H^s_r}`
    fn sobolev_norm(&self, s: f64, r: f64) -> PyResult<f64> {
        SobolevIndex::new(s, r).and_then(|idx| sobolev_norm(&self.inner, idx)).map_err(to_py)
    }

    /// `(1 - Δ/2)^{order/2} f`
    fn bessel_potential(&self, order: f64) -> PyResult<Self> {
        bessel_potential(&self.inner, order).map(Self::from).map_err(to_py)
    }

    /// `P(t) f`
    fn heat(&self, t: f64) -> PyResult<Self> {
        heat_semigroup(&self.inner, t).map(Self::from).map_err(to_py)
    }

    fn gradient(&self) -> PyResult<Self> {
        gradient(&self.inner).map(Self::from).map_err(to_py)
    }

    /// Haar truncation at `level` (d = 1 only).
    fn haar_project(&self, level: u32) -> PyResult<Self> {
        haar_project(&self.inner, level).map(Self::from).map_err(to_py)
    }

    /// Convolution with the Gaussian mollifier of width `1 / level`.
    fn mollify(&self, level: u32) -> PyResult<Self> {
        mollify_project(&self.inner, level).map(Self::from).map_err(to_py)
    }

    fn max_abs_diff(&self, other: &PyField) -> PyResult<f64> {
        self.inner.max_abs_diff(&other.inner).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.inner.values().len()
    }
}

/// A drift certified to lie in the rough class of the parameter set.
#[pyclass(frozen, skip_from_py_object, name = "Driver")]
#[derive(Clone)]
struct PyDriver {
    inner: CertifiedDriver,
}

#[pymethods]
impl PyDriver {
    /// `kind` is one of `zero`, `single_mode`, `smooth_bump`, `fbm_derivative`.
    #[new]
    #[pyo3(signature = (kind, grid, params, steps, amplitude=1.0, seed=0, hurst=0.75, mode=1, center=0.0, width=1.0))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        kind: &str,
        grid: &PyGrid,
        params: &PyParams,
        steps: usize,
        amplitude: f64,
        seed: u64,
        hurst: f64,
        mode: i64,
        center: f64,
        width: f64,
    ) -> PyResult<Self> {
        let kind = match kind {
            "zero" => DriverKind::Zero,
            "single_mode" => DriverKind::SingleMode { mode },
            "smooth_bump" => DriverKind::SmoothBump { center, width },
            "fbm_derivative" => DriverKind::FbmDerivative { hurst },
            other => return Err(PyValueError::new_err(format!("unknown drift kind {other:?}"))),
        };
        let p = params.inner;
        let time = TimeGrid::new(p.horizon(), steps).map_err(to_py)?;
        let spec = RoughDriverSpec { kind, amplitude, modulation: Modulation::Constant, seed };
        let b = make_driver(&spec, &grid.inner, &time, p.beta()).map_err(to_py)?;
        CertifiedDriver::certify(b, p.beta(), p.q()).map(|inner| Self { inner }).map_err(to_py)
    }

    fn certificate<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        json_to_py(py, self.inner.certificate())
    }

    fn snapshot(&self, k: usize) -> PyResult<PyField> {
        snapshot(self.inner.field(), k)
    }
}

fn snapshot(u: &TimeField, k: usize) -> PyResult<PyField> {
    if k > u.time().steps() {
        return Err(PyValueError::new_err(format!("node {k} beyond {} steps", u.time().steps())));
    }
    Ok(u.snapshot(k).clone().into())
}

fn nonlinearity(kind: &str, strength: f64) -> PyResult<BuiltinDriver> {
    match kind {
        "zero" => Ok(BuiltinDriver::Zero),
        "linear_in_y" => Ok(BuiltinDriver::LinearInY { k: strength }),
        "saturating_in_z" => Ok(BuiltinDriver::SaturatingInZ { lipschitz: strength }),
        other => Err(PyValueError::new_err(format!("unknown nonlinearity {other:?}"))),
    }
}

/// Mild solution `u` of the semilinear PDE with its Picard report.
#[pyclass(frozen, name = "Solution")]
struct PySolution {
    u: TimeField,
    report: SolveReport,
    driver: CertifiedDriver,
    f: BuiltinDriver,
    params: ParamSet,
}

#[pymethods]
impl PySolution {
    fn times(&self) -> Vec<f64> {
        self.u.time().nodes()
    }

    fn snapshot(&self, k: usize) -> PyResult<PyField> {
        snapshot(&self.u, k)
    }

    fn report<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        json_to_py(py, &self.report)
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.report.iterations
    }

    /// Monte Carlo estimate of `u(s, x0)` along Brownian paths on a time grid
    /// `refinement` times finer than the solution's. Returns per component
    /// `(mean, stderr, grid value)`.
    #[pyo3(signature = (s, x0, paths=1000, seed=0, refinement=1))]
    fn feynman_kac(
        &self,
        py: Python<'_>,
        s: f64,
        x0: Vec<f64>,
        paths: usize,
        seed: u64,
        refinement: usize,
    ) -> PyResult<Vec<(f64, f64, f64)>> {
        py.detach(|| {
            let time = self.u.time();
            let fine = TimeGrid::new(time.horizon(), time.steps() * refinement.max(1))?;
            let ensemble = EnsembleSpec::new(paths, fine, self.params.d(), seed)?;
            let model = BsdeModel::new(self.u.clone(), &self.driver, &self.f, &self.params, InterpOrder::Cubic)?;
            let est = model.feynman_kac(s, &x0, &ensemble)?;
            Ok(est.components.iter().zip(&est.reference).map(|(e, r)| (e.mean, e.stderr, *r)).collect())
        })
        .map_err(to_py)
    }
}

/// Picard iteration for `u`; `nonlinearity` is `zero`, `linear_in_y` or
/// `saturating_in_z` with `strength` its coefficient.
#[pyfunction]
#[pyo3(signature = (driver, terminal, params, nonlinearity="zero", strength=0.0, tol=1e-8, max_iter=200, rho=None))]
#[allow(clippy::too_many_arguments)]
fn solve_pde(
    py: Python<'_>,
    driver: &PyDriver,
    terminal: &PyField,
    params: &PyParams,
    nonlinearity: &str,
    strength: f64,
    tol: f64,
    max_iter: usize,
    rho: Option<f64>,
) -> PyResult<PySolution> {
    let f = self::nonlinearity(nonlinearity, strength)?;
    let opts = PicardOptions { tol, max_iter, rho, ..PicardOptions::default() };
    let (u, report) = py
        .detach(|| solve_semilinear_u(&driver.inner, &f, &terminal.inner, &params.inner, &opts))
        .map_err(to_py)?;
    Ok(PySolution { u, report, driver: driver.inner.clone(), f, params: params.inner })
}

const SUBCOMMANDS: [Subcommand; 8] = [
    Subcommand::ValidateParams,
    Subcommand::SolvePde,
    Subcommand::ChainRuleTest,
    Subcommand::ConsistencyTest,
    Subcommand::BsdeVerify,
    Subcommand::FeynmanKac,
    Subcommand::HaarDemo,
    Subcommand::FullSuite,
];

/// Runs a batch experiment like the command-line tool. Returns
/// `(exit_code, message, output_dir)`.
#[pyfunction]
fn run_experiment(py: Python<'_>, subcommand: &str, config: PathBuf) -> PyResult<(i32, String, Option<PathBuf>)> {
    let cmd = SUBCOMMANDS
        .into_iter()
        .find(|c| c.name() == subcommand)
        .ok_or_else(|| PyValueError::new_err(format!("unknown subcommand {subcommand:?}")))?;
    let out = py.detach(|| run(cmd, &config));
    Ok((out.code, out.message, out.output_dir))
}

#[pymodule]
fn pyroughbsde(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyParams>()?;
    m.add_class::<PyGrid>()?;
    m.add_class::<PyField>()?;
    m.add_class::<PyDriver>()?;
    m.add_class::<PySolution>()?;
    m.add_function(wrap_pyfunction!(validate_params, m)?)?;
    m.add_function(wrap_pyfunction!(solve_pde, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
