//! Brownian paths, the occupation-time operator `l ↦ ∫_0^· l(r, W_r) dr` and its
//! chain-rule extension to distributional `l`, covariation estimates and the
//! martingale-orthogonality check.
//!
//! For rough `l` the operator is evaluated through
//! `A_t = φ(t, W_t) - φ(0, W_0) - ∫_0^t ∇φ*(r, W_r) dW_r`, where `φ` solves
//! `∂_t φ + ½Δφ = l`. Stochastic integrals are left-point Euler sums.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, GridSpec};
use crate::interp::{InterpOrder, Stencil};
use crate::mild::{solve_linear_phi, TimeField, TimeGrid};
use crate::paraproduct::contract_gradient;
use crate::params::ParamSet;
use crate::stats::Estimate;

/// Values in `ℝ^dim` at every node of a time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplePath {
    time: TimeGrid,
    dim: usize,
    values: Vec<f64>,
}

impl SamplePath {
    pub fn new(time: TimeGrid, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || values.len() != (time.steps() + 1) * dim {
            return Err(Error::Mismatch(format!(
                "path of dimension {dim} on {} nodes cannot hold {} values",
                time.steps() + 1,
                values.len()
            )));
        }
        Ok(Self { time, dim, values })
    }

    pub fn zeros(time: TimeGrid, dim: usize) -> Self {
        Self { time, dim, values: vec![0.0; (time.steps() + 1) * dim] }
    }

    pub fn time(&self) -> &TimeGrid {
        &self.time
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn at_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn terminal(&self) -> &[f64] {
        self.at(self.time.steps())
    }

    /// Component `c` at every node.
    pub fn component(&self, c: usize) -> Vec<f64> {
        self.values.iter().skip(c).step_by(self.dim).cloned().collect()
    }

    /// `max_k |self_k - other_k|` (Euclidean in the components).
    pub fn sup_distance(&self, other: &SamplePath) -> Result<f64> {
        if self.time != other.time || self.dim != other.dim {
            return Err(Error::Mismatch("paths differ in time grid or dimension".into()));
        }
        let mut best: f64 = 0.0;
        for k in 0..=self.time.steps() {
            let d2: f64 = self.at(k).iter().zip(other.at(k)).map(|(a, b)| (a - b) * (a - b)).sum();
            best = best.max(d2.sqrt());
        }
        Ok(best)
    }

    /// `a * self + other`
    pub fn axpy(&self, a: f64, other: &SamplePath) -> Result<SamplePath> {
        if self.time != other.time || self.dim != other.dim {
            return Err(Error::Mismatch("paths differ in time grid or dimension".into()));
        }
        let values = self.values.iter().zip(&other.values).map(|(x, y)| a * x + y).collect();
        Ok(SamplePath { time: self.time, dim: self.dim, values })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    SmoothIntegral,
    ChainRule,
    Composed,
}

/// Output of an occupation-time operator on one path.
#[derive(Clone, Debug, PartialEq)]
pub struct PathFunctional {
    pub path: SamplePath,
    pub provenance: Provenance,
}

/// Writes `(path_id, t, components...)` rows for an ensemble of functionals.
pub fn functionals_to_csv(items: &[(u64, &PathFunctional)]) -> String {
    let dim = items.first().map(|x| x.1.path.dim()).unwrap_or(0);
    let mut s = String::from("path_id,t");
    for c in 0..dim {
        s.push_str(&format!(",a{c}"));
    }
    s.push('\n');
    for (id, f) in items {
        for k in 0..=f.path.time().steps() {
            s.push_str(&format!("{id},{}", f.path.time().node(k)));
            for v in f.path.at(k) {
                s.push_str(&format!(",{v}"));
            }
            s.push('\n');
        }
    }
    s
}

/// A discretized `d`-dimensional Brownian motion started at 0.
#[derive(Clone, Debug, PartialEq)]
pub struct BrownianPath {
    path_id: u64,
    increments: Vec<f64>,
    positions: SamplePath,
}

impl BrownianPath {
    /// Increments `√dt · N(0, I)` from the ChaCha stream `path_id` of `seed`.
    pub fn generate(time: TimeGrid, dim: usize, seed: u64, path_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path_id);
        let sd = time.dt().sqrt();
        let increments: Vec<f64> = (0..time.steps() * dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                sd * z
            })
            .collect();
        Self::from_increments(time, dim, path_id, increments).expect("increment count matches")
    }

    pub fn from_increments(time: TimeGrid, dim: usize, path_id: u64, increments: Vec<f64>) -> Result<Self> {
        if increments.len() != time.steps() * dim {
            return Err(Error::Mismatch("increment count".into()));
        }
        let mut positions = SamplePath::zeros(time, dim);
        for k in 0..time.steps() {
            for c in 0..dim {
                let prev = positions.values[k * dim + c];
                positions.values[(k + 1) * dim + c] = prev + increments[k * dim + c];
            }
        }
        Ok(Self { path_id, increments, positions })
    }

    pub fn path_id(&self) -> u64 {
        self.path_id
    }

    pub fn time(&self) -> &TimeGrid {
        self.positions.time()
    }

    pub fn dim(&self) -> usize {
        self.positions.dim()
    }

    pub fn increment(&self, k: usize) -> &[f64] {
        let d = self.dim();
        &self.increments[k * d..(k + 1) * d]
    }

    pub fn position(&self, k: usize) -> &[f64] {
        self.positions.at(k)
    }

    pub fn positions(&self) -> &SamplePath {
        &self.positions
    }

    /// The same path observed on every `factor`-th node.
    pub fn coarsen(&self, factor: usize) -> Result<BrownianPath> {
        let time = self.time();
        if factor == 0 || time.steps() % factor != 0 {
            return Err(Error::InvalidArgument(format!("cannot coarsen {} steps by {factor}", time.steps())));
        }
        let coarse = TimeGrid::new(time.horizon(), time.steps() / factor)?;
        let d = self.dim();
        let mut inc = vec![0.0; coarse.steps() * d];
        for k in 0..time.steps() {
            for c in 0..d {
                inc[(k / factor) * d + c] += self.increments[k * d + c];
            }
        }
        BrownianPath::from_increments(coarse, d, self.path_id, inc)
    }
}

/// A reproducible family of Brownian paths; path `i` uses stream `i`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub paths: usize,
    pub time: TimeGrid,
    pub dim: usize,
    pub seed: u64,
}

impl EnsembleSpec {
    pub fn new(paths: usize, time: TimeGrid, dim: usize, seed: u64) -> Result<Self> {
        if paths == 0 || dim == 0 {
            return Err(Error::InvalidArgument("ensemble needs at least one path and one dimension".into()));
        }
        Ok(Self { paths, time, dim, seed })
    }

    pub fn path(&self, id: u64) -> BrownianPath {
        BrownianPath::generate(self.time, self.dim, self.seed, id)
    }

    /// Applies `f` to every path in parallel, preserving path order.
    pub fn map<T: Send>(&self, f: impl Fn(&BrownianPath) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
        (0..self.paths as u64).into_par_iter().map(|id| f(&self.path(id))).collect()
    }
}

#[derive(Clone, Debug)]
pub struct PathEnsemble {
    pub spec: EnsembleSpec,
    pub paths: Vec<BrownianPath>,
}

pub fn sample_ensemble(paths: usize, time: TimeGrid, dim: usize, seed: u64) -> Result<PathEnsemble> {
    let spec = EnsembleSpec::new(paths, time, dim, seed)?;
    let paths = spec.map(|p| Ok(p.clone()))?;
    Ok(PathEnsemble { spec, paths })
}

/// `C_n = (1/ε) Σ_{m < n, m + lag ≤ M} (Y_{m+lag} - Y_m) ⊗ (X_{m+lag} - X_m) dt`
/// with `ε = lag · dt`. Entry `(a, b)` sits at component `a * dim_X + b`.
pub fn covariation(y: &SamplePath, x: &SamplePath, lag: usize) -> Result<SamplePath> {
    if y.time() != x.time() {
        return Err(Error::Mismatch("covariation needs a shared time grid".into()));
    }
    let m = y.time().steps();
    if lag == 0 || lag > m {
        return Err(Error::InvalidArgument(format!("lag {lag} outside 1..={m}")));
    }
    let (dy, dx) = (y.dim(), x.dim());
    let mut out = SamplePath::zeros(*y.time(), dy * dx);
    let scale = 1.0 / lag as f64;
    let mut acc = vec![0.0; dy * dx];
    for n in 1..=m {
        let s = n - 1;
        if s + lag <= m {
            for a in 0..dy {
                let ya = y.at(s + lag)[a] - y.at(s)[a];
                for b in 0..dx {
                    acc[a * dx + b] += scale * ya * (x.at(s + lag)[b] - x.at(s)[b]);
                }
            }
        }
        out.at_mut(n).copy_from_slice(&acc);
    }
    Ok(out)
}

/// Terminal covariation for lags `1, 2, 4` steps.
pub fn covariation_by_lag(y: &SamplePath, x: &SamplePath) -> Result<Vec<(f64, Vec<f64>)>> {
    [1usize, 2, 4]
        .iter()
        .map(|&lag| Ok((lag as f64 * y.time().dt(), covariation(y, x, lag)?.terminal().to_vec())))
        .collect()
}

/// Left Riemann sum of `∫_0^t l(r, W_r) dr`; `l` writes `channels` values.
pub fn a_ww_smooth(
    l: &(dyn Fn(f64, &[f64], &mut [f64]) + Sync),
    channels: usize,
    path: &BrownianPath,
) -> PathFunctional {
    let time = *path.time();
    let dt = time.dt();
    let mut out = SamplePath::zeros(time, channels);
    let mut acc = vec![0.0; channels];
    let mut buf = vec![0.0; channels];
    for k in 0..time.steps() {
        l(time.node(k), path.position(k), &mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b * dt;
        }
        out.at_mut(k + 1).copy_from_slice(&acc);
    }
    PathFunctional { path: out, provenance: Provenance::SmoothIntegral }
}

/// Evaluates a [`TimeField`] at path points. Paths may run on a refinement of
/// the field's time grid; between snapshots the field is interpolated linearly.
#[derive(Clone, Debug)]
pub struct PathSampler {
    pub order: InterpOrder,
    /// Paths must stay within `[-limit, limit]^d`.
    pub limit: f64,
}

impl PathSampler {
    pub fn new(grid: &GridSpec, order: InterpOrder) -> Self {
        Self { order, limit: grid.half_width() - 1.0 }
    }

    pub fn check(&self, path_id: u64, t: f64, x: &[f64]) -> Result<()> {
        for &v in x {
            if !(v.abs() <= self.limit) {
                return Err(Error::BoxExit { path: path_id, t, x: v.abs(), limit: self.limit });
            }
        }
        Ok(())
    }

    /// Fine node `n` → (coarse node, weight on the next coarse node).
    pub fn locate(ratio: usize, n: usize) -> (usize, f64) {
        (n / ratio, (n % ratio) as f64 / ratio as f64)
    }

    pub fn eval(&self, f: &TimeField, ratio: usize, n: usize, stencil: &Stencil, out: &mut [f64]) {
        let (q, w) = Self::locate(ratio, n);
        stencil.apply(f.snapshot(q), out);
        if w > 0.0 {
            let mut next = vec![0.0; out.len()];
            stencil.apply(f.snapshot(q + 1), &mut next);
            for (o, v) in out.iter_mut().zip(next) {
                *o = (1.0 - w) * *o + w * v;
            }
        }
    }
}

fn ratio_between(fine: &TimeGrid, coarse: &TimeGrid) -> Result<usize> {
    fine.refinement_of(coarse).ok_or_else(|| {
        Error::Mismatch(format!(
            "path grid (T = {}, M = {}) does not refine the field grid (T = {}, M = {})",
            fine.horizon(),
            fine.steps(),
            coarse.horizon(),
            coarse.steps()
        ))
    })
}

/// Chain-rule representation of `A^{W,W}(l)` for a fixed forcing `l`: holds
/// `φ` solving `∂_t φ + ½Δφ = l` and its gradient.
#[derive(Clone, Debug)]
pub struct ChainRuleOperator {
    phi: TimeField,
    grad: TimeField,
    sampler: PathSampler,
}

impl ChainRuleOperator {
    pub fn new(l: &TimeField, psi: &Field, param: &ParamSet, order: InterpOrder) -> Result<Self> {
        Self::from_phi(solve_linear_phi(l, psi, param)?, order)
    }

    pub fn from_phi(phi: TimeField, order: InterpOrder) -> Result<Self> {
        let grad = phi.gradient()?;
        let sampler = PathSampler::new(phi.grid(), order);
        Ok(Self { phi, grad, sampler })
    }

    pub fn phi(&self) -> &TimeField {
        &self.phi
    }

    pub fn grad(&self) -> &TimeField {
        &self.grad
    }

    /// `A_n = φ(t_n, W_n) - φ(0, W_0) - Σ_{k<n} ∇φ*(t_k, W_k) ΔW_k`.
    pub fn apply(&self, path: &BrownianPath) -> Result<PathFunctional> {
        self.apply_from(path, 0, None)
    }

    /// The operator on the shifted path `X_r = x0 + W_r - W_{t_start}` for
    /// `r ≥ t_start`; the output is zero before `start`.
    pub fn apply_from(&self, path: &BrownianPath, start: usize, x0: Option<&[f64]>) -> Result<PathFunctional> {
        let time = *path.time();
        let ratio = ratio_between(&time, self.phi.time())?;
        let d = path.dim();
        let grid = *self.phi.grid();
        if d != grid.dim() {
            return Err(Error::Mismatch("path and field dimensions differ".into()));
        }
        let m = self.phi.channels();
        let origin = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![0.0; d]);
        let point = |k: usize| -> Vec<f64> {
            let base = path.position(start);
            path.position(k).iter().zip(base).zip(&origin).map(|((w, b), o)| o + w - b).collect()
        };
        let mut out = SamplePath::zeros(time, m);
        let mut phi_now = vec![0.0; m];
        let mut grad_now = vec![0.0; d * m];
        let x = point(start);
        self.sampler.check(path.path_id(), time.node(start), &x)?;
        let stencil = Stencil::new(&grid, self.sampler.order, &x);
        let mut phi_start = vec![0.0; m];
        self.sampler.eval(&self.phi, ratio, start, &stencil, &mut phi_start);
        self.sampler.eval(&self.grad, ratio, start, &stencil, &mut grad_now);
        let mut ito = vec![0.0; m];
        for n in start + 1..=time.steps() {
            let dw = path.increment(n - 1);
            for j in 0..m {
                for i in 0..d {
                    ito[j] += grad_now[i * m + j] * dw[i];
                }
            }
            let x = point(n);
            self.sampler.check(path.path_id(), time.node(n), &x)?;
            let stencil = Stencil::new(&grid, self.sampler.order, &x);
            self.sampler.eval(&self.phi, ratio, n, &stencil, &mut phi_now);
            if n < time.steps() {
                self.sampler.eval(&self.grad, ratio, n, &stencil, &mut grad_now);
            }
            let slot = out.at_mut(n);
            for j in 0..m {
                slot[j] = phi_now[j] - phi_start[j] - ito[j];
            }
        }
        Ok(PathFunctional { path: out, provenance: Provenance::ChainRule })
    }

    /// `Σ_{k<n} ∇φ*(t_k, W_k) ΔW_k`, the martingale part removed by the chain rule.
    pub fn ito_part(&self, path: &BrownianPath) -> Result<SamplePath> {
        let a = self.apply(path)?;
        let time = *path.time();
        let ratio = ratio_between(&time, self.phi.time())?;
        let grid = *self.phi.grid();
        let m = self.phi.channels();
        let mut out = SamplePath::zeros(time, m);
        let mut phi0 = vec![0.0; m];
        self.sampler.eval(&self.phi, ratio, 0, &Stencil::new(&grid, self.sampler.order, path.position(0)), &mut phi0);
        let mut phi_n = vec![0.0; m];
        for n in 1..=time.steps() {
            let st = Stencil::new(&grid, self.sampler.order, path.position(n));
            self.sampler.eval(&self.phi, ratio, n, &st, &mut phi_n);
            let slot = out.at_mut(n);
            for j in 0..m {
                slot[j] = phi_n[j] - phi0[j] - a.path.at(n)[j];
            }
        }
        Ok(out)
    }
}

/// `A^{W,W}(l)` for `l ∈ C([0,T]; H^{-β}_p)` on one path.
pub fn a_ww_rough(l: &TimeField, path: &BrownianPath, psi: &Field, param: &ParamSet, order: InterpOrder) -> Result<PathFunctional> {
    ChainRuleOperator::new(l, psi, param, order)?.apply(path)
}

/// `∇γ* b` at every time node.
pub fn gradient_forcing(b: &TimeField, gamma: &TimeField) -> Result<TimeField> {
    if b.time() != gamma.time() {
        return Err(Error::Mismatch("drift and γ live on different time grids".into()));
    }
    let grad = gamma.gradient()?;
    let snaps = (0..=b.time().steps())
        .into_par_iter()
        .map(|k| contract_gradient(grad.snapshot(k), b.snapshot(k)))
        .collect::<Result<Vec<_>>>()?;
    TimeField::new(*b.time(), snaps)
}

/// Operator computing `A^{W,Y}(b) = A^{W,W}(∇γ* b)` along paths.
pub fn a_wy_operator(b: &TimeField, gamma: &TimeField, param: &ParamSet, order: InterpOrder) -> Result<ChainRuleOperator> {
    let l = gradient_forcing(b, gamma)?;
    let zero = Field::zeros(*l.grid(), l.channels());
    ChainRuleOperator::new(&l, &zero, param, order)
}

pub fn a_wy(b: &TimeField, gamma: &TimeField, path: &BrownianPath, param: &ParamSet, order: InterpOrder) -> Result<PathFunctional> {
    let mut out = a_wy_operator(b, gamma, param, order)?.apply(path)?;
    out.provenance = Provenance::Composed;
    Ok(out)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub paths: usize,
    pub steps: usize,
    /// Ensemble mean of `sup_t |A_rough - A_smooth|`.
    pub mean_sup_diff: f64,
    pub max_sup_diff: f64,
    /// The u.c.p. topology is surrogated by this ensemble statistic.
    pub metric: String,
}

/// Compares the chain-rule operator with the direct Riemann sum for a forcing
/// that has a pointwise version `g_fn`.
pub fn classical_consistency(
    g: &TimeField,
    g_fn: &(dyn Fn(f64, &[f64], &mut [f64]) + Sync),
    ensemble: &EnsembleSpec,
    param: &ParamSet,
    order: InterpOrder,
) -> Result<ConsistencyReport> {
    let zero = Field::zeros(*g.grid(), g.channels());
    let op = ChainRuleOperator::new(g, &zero, param, order)?;
    let diffs = ensemble.map(|path| {
        let rough = op.apply(path)?;
        let smooth = a_ww_smooth(g_fn, g.channels(), path);
        rough.path.sup_distance(&smooth.path)
    })?;
    Ok(ConsistencyReport {
        paths: ensemble.paths,
        steps: ensemble.time.steps(),
        mean_sup_diff: crate::stats::mean(&diffs),
        max_sup_diff: diffs.iter().cloned().fold(0.0, f64::max),
        metric: "ensemble mean of the per-path sup-in-time distance".into(),
    })
}

/// Continuous test martingales against which brackets are measured.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMartingale {
    /// Component `i` of `W`.
    Coordinate(usize),
    /// `∫ sin(W^0) dW^0`
    SineIntegral,
    /// `∫ cos(W^0) dW^0`
    CosineIntegral,
}

impl TestMartingale {
    pub fn standard_set(dim: usize) -> Vec<TestMartingale> {
        let mut v: Vec<TestMartingale> = (0..dim).map(TestMartingale::Coordinate).collect();
        v.push(TestMartingale::SineIntegral);
        v.push(TestMartingale::CosineIntegral);
        v
    }

    pub fn path(&self, w: &BrownianPath) -> SamplePath {
        let time = *w.time();
        let mut out = SamplePath::zeros(time, 1);
        let mut acc = 0.0;
        for k in 0..time.steps() {
            match *self {
                TestMartingale::Coordinate(i) => acc = w.position(k + 1)[i],
                TestMartingale::SineIntegral => acc += w.position(k)[0].sin() * w.increment(k)[0],
                TestMartingale::CosineIntegral => acc += w.position(k)[0].cos() * w.increment(k)[0],
            }
            out.at_mut(k + 1)[0] = acc;
        }
        out
    }

    pub fn label(&self) -> String {
        match self {
            TestMartingale::Coordinate(i) => format!("W_{i}"),
            TestMartingale::SineIntegral => "int sin(W) dW".into(),
            TestMartingale::CosineIntegral => "int cos(W) dW".into(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BracketEntry {
    pub martingale: String,
    pub component: usize,
    pub estimate: Estimate,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OrthogonalityReport {
    pub lag: usize,
    pub entries: Vec<BracketEntry>,
    pub pass: bool,
}

/// `[A, N]_T` ensemble means against each test martingale, each required to be
/// within 3 standard errors of zero.
pub fn orthogonality_check(
    items: &[(PathFunctional, BrownianPath)],
    martingales: &[TestMartingale],
    lag: usize,
) -> Result<OrthogonalityReport> {
    let first = items.first().ok_or_else(|| Error::InvalidArgument("empty ensemble".into()))?;
    let dim_a = first.0.path.dim();
    let per_path = items
        .par_iter()
        .map(|(a, w)| {
            let mut row = Vec::with_capacity(martingales.len() * dim_a);
            for n in martingales {
                let c = covariation(&a.path, &n.path(w), lag)?;
                row.extend_from_slice(c.terminal());
            }
            Ok(row)
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let mut entries = Vec::new();
    for (mi, n) in martingales.iter().enumerate() {
        for a in 0..dim_a {
            let vals: Vec<f64> = per_path.iter().map(|r| r[mi * dim_a + a]).collect();
            let estimate = Estimate::from_samples(&vals);
            entries.push(BracketEntry { martingale: n.label(), component: a, estimate, pass: estimate.within(0.0, 3.0) });
        }
    }
    let pass = entries.iter().all(|e| e.pass);
    Ok(OrthogonalityReport { lag, entries, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParamCandidate;

    fn param() -> ParamSet {
        ParamCandidate::new(0.3, 3.0, 0.5, 2.5, 1).validate().unwrap()
    }

    #[test]
    fn paths_are_reproducible_and_distinct() {
        let t = TimeGrid::new(1.0, 64).unwrap();
        let a = BrownianPath::generate(t, 2, 11, 3);
        assert_eq!(a, BrownianPath::generate(t, 2, 11, 3));
        assert_ne!(a, BrownianPath::generate(t, 2, 11, 4));
        assert_eq!(a.position(0), &[0.0, 0.0]);
    }

    #[test]
    fn coarsening_keeps_positions() {
        let t = TimeGrid::new(1.0, 64).unwrap();
        let a = BrownianPath::generate(t, 1, 1, 0);
        let c = a.coarsen(4).unwrap();
        for k in 0..=16 {
            assert!((c.position(k)[0] - a.position(4 * k)[0]).abs() < 1e-14);
        }
        assert!(a.coarsen(3).is_err());
    }

    #[test]
    fn covariation_is_transpose_symmetric() {
        let t = TimeGrid::new(1.0, 128).unwrap();
        let w = BrownianPath::generate(t, 2, 5, 0);
        let v = BrownianPath::generate(t, 1, 5, 1);
        let a = covariation(w.positions(), v.positions(), 2).unwrap();
        let b = covariation(v.positions(), w.positions(), 2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn constant_forcing_is_exact() {
        let g = GridSpec::line(64, 10.0).unwrap();
        let t = TimeGrid::new(1.0, 32).unwrap();
        let l = TimeField::constant(t, &Field::constant(g, 1, 0.7));
        let w = BrownianPath::generate(t, 1, 2, 0);
        let a = a_ww_rough(&l, &w, &Field::zeros(g, 1), &param(), InterpOrder::Linear).unwrap();
        for k in 0..=32 {
            assert!((a.path.at(k)[0] - 0.7 * t.node(k)).abs() < 1e-12);
        }
        let s = a_ww_smooth(&|_, _, o: &mut [f64]| o[0] = 0.7, 1, &w);
        assert!(s.path.sup_distance(&a.path).unwrap() < 1e-12);
    }

    #[test]
    fn box_exit_is_reported() {
        let g = GridSpec::line(64, 2.0).unwrap();
        let t = TimeGrid::new(1.0, 4).unwrap();
        let w = BrownianPath::from_increments(t, 1, 9, vec![0.5, 0.5, 0.5, 0.5]).unwrap();
        let l = TimeField::zeros(t, g, 1);
        let err = a_ww_rough(&l, &w, &Field::zeros(g, 1), &param(), InterpOrder::Linear).unwrap_err();
        assert!(matches!(err, Error::BoxExit { path: 9, .. }));
    }

    #[test]
    fn path_grid_must_refine_field_grid() {
        let g = GridSpec::line(64, 10.0).unwrap();
        let l = TimeField::zeros(TimeGrid::new(1.0, 8).unwrap(), g, 1);
        let op = ChainRuleOperator::new(&l, &Field::zeros(g, 1), &param(), InterpOrder::Linear).unwrap();
        let w = BrownianPath::generate(TimeGrid::new(1.0, 12).unwrap(), 1, 0, 0);
        assert!(op.apply(&w).is_err());
        let w = BrownianPath::generate(TimeGrid::new(1.0, 32).unwrap(), 1, 0, 0);
        assert!(op.apply(&w).is_ok());
    }
}
