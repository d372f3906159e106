//! Mild solutions of backward heat equations with singular forcing.
//!
//! Terminal-value problems `∂_t φ + ½Δφ = l`, `φ(T) = Ψ` are solved in their
//! Duhamel form `φ(t) = P(T-t)Ψ - ∫_t^T P(r-t) l(r) dr`. The time integral is
//! evaluated slab by slab in Fourier space with `l` frozen to the slab average
//! and the heat multiplier integrated exactly, which absorbs the singularity of
//! `P(r-t)` as `r → t`.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::drivers::CertifiedDriver;
use crate::error::{Error, Result};
use crate::grid::{Field, GridSpec, Spectrum};
use crate::paraproduct::contract_gradient;
use crate::params::{contraction_rho, LipschitzDriver, ParamSet, RHO_CEILING};
use crate::spectral::{
    gradient_of_spectrum, heat_multiplier, holder_norm, laplacian, sobolev_norm, sobolev_norm_of_spectrum,
    HolderFlavor, SobolevIndex,
};

/// Uniform grid `t_k = k T / M`, `k = 0..=M`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) || steps == 0 {
            return Err(Error::InvalidArgument(format!(
                "time grid needs T > 0 and M >= 1, got T = {horizon}, M = {steps}"
            )));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        if k == self.steps {
            self.horizon
        } else {
            self.horizon * k as f64 / self.steps as f64
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.node(k)).collect()
    }

    /// Index of the node closest to `t`.
    pub fn nearest(&self, t: f64) -> usize {
        ((t / self.dt()).round().max(0.0) as usize).min(self.steps)
    }

    /// `Some(r)` when `self` subdivides each step of `coarse` into `r` steps.
    pub fn refinement_of(&self, coarse: &TimeGrid) -> Option<usize> {
        if self.steps % coarse.steps != 0 || (self.horizon - coarse.horizon).abs() > 1e-12 * self.horizon {
            return None;
        }
        Some(self.steps / coarse.steps)
    }
}

/// One [`Field`] per node of a [`TimeGrid`].
#[derive(Clone, Debug, PartialEq)]
pub struct TimeField {
    time: TimeGrid,
    snapshots: Vec<Field>,
}

impl TimeField {
    pub fn new(time: TimeGrid, snapshots: Vec<Field>) -> Result<Self> {
        if snapshots.len() != time.steps() + 1 {
            return Err(Error::Mismatch(format!(
                "{} snapshots for {} time steps",
                snapshots.len(),
                time.steps()
            )));
        }
        for s in &snapshots[1..] {
            snapshots[0].check_layout(s)?;
        }
        Ok(Self { time, snapshots })
    }

    pub fn from_fn(time: TimeGrid, f: impl Fn(f64) -> Field + Sync) -> Result<Self> {
        let snaps: Vec<Field> = (0..=time.steps()).into_par_iter().map(|k| f(time.node(k))).collect();
        Self::new(time, snaps)
    }

    pub fn constant(time: TimeGrid, field: &Field) -> Self {
        Self { time, snapshots: vec![field.clone(); time.steps() + 1] }
    }

    pub fn zeros(time: TimeGrid, grid: GridSpec, channels: usize) -> Self {
        Self::constant(time, &Field::zeros(grid, channels))
    }

    pub fn time(&self) -> &TimeGrid {
        &self.time
    }

    pub fn grid(&self) -> &GridSpec {
        self.snapshots[0].grid()
    }

    pub fn channels(&self) -> usize {
        self.snapshots[0].channels()
    }

    pub fn snapshot(&self, k: usize) -> &Field {
        &self.snapshots[k]
    }

    pub fn snapshots(&self) -> &[Field] {
        &self.snapshots
    }

    pub fn into_snapshots(self) -> Vec<Field> {
        self.snapshots
    }

    pub fn is_finite(&self) -> bool {
        self.snapshots.iter().all(Field::is_finite)
    }

    pub fn map(&self, f: impl Fn(&Field) -> Result<Field> + Sync + Send) -> Result<TimeField> {
        let snaps = self.snapshots.par_iter().map(&f).collect::<Result<Vec<_>>>()?;
        TimeField::new(self.time, snaps)
    }

    pub fn scaled(&self, a: f64) -> TimeField {
        TimeField { time: self.time, snapshots: self.snapshots.iter().map(|s| s.scaled(a)).collect() }
    }

    /// `a * self + other`
    pub fn axpy(&self, a: f64, other: &TimeField) -> Result<TimeField> {
        if self.time != other.time {
            return Err(Error::Mismatch("time grids differ".into()));
        }
        let snaps = self
            .snapshots
            .iter()
            .zip(&other.snapshots)
            .map(|(x, y)| x.axpy(a, y))
            .collect::<Result<Vec<_>>>()?;
        TimeField::new(self.time, snaps)
    }

    pub fn max_abs_diff(&self, other: &TimeField) -> Result<f64> {
        if self.time != other.time {
            return Err(Error::Mismatch("time grids differ".into()));
        }
        let mut m: f64 = 0.0;
        for (a, b) in self.snapshots.iter().zip(&other.snapshots) {
            m = m.max(a.max_abs_diff(b)?);
        }
        Ok(m)
    }

    /// `max_k ‖u(t_k)‖` in the given norm.
    pub fn sup_norm(&self, idx: SobolevIndex) -> Result<f64> {
        let norms = self.snapshots.par_iter().map(|s| sobolev_norm(s, idx)).collect::<Result<Vec<_>>>()?;
        Ok(norms.into_iter().fold(0.0, f64::max))
    }

    /// Continuity proxy `max_k ‖u(t_{k+1}) - u(t_k)‖`.
    pub fn continuity_modulus(&self, idx: SobolevIndex) -> Result<f64> {
        let norms = (0..self.time.steps())
            .into_par_iter()
            .map(|k| sobolev_norm(&self.snapshots[k + 1].sub(&self.snapshots[k])?, idx))
            .collect::<Result<Vec<_>>>()?;
        Ok(norms.into_iter().fold(0.0, f64::max))
    }

    /// Gradient of every snapshot.
    pub fn gradient(&self) -> Result<TimeField> {
        self.map(crate::spectral::gradient)
    }
}

/// Applies the backward Duhamel recurrence to forcing spectra `l̂_k`, adding
/// `P(T - t_k)Ψ` when a terminal spectrum is given.
fn mild_spectra(time: &TimeGrid, terminal: Option<&Spectrum>, forcing: &[Spectrum]) -> Vec<Spectrum> {
    let grid = *forcing[0].grid();
    let m = time.steps();
    let dt = time.dt();
    let lambda: Vec<f64> = grid.xi_squared().into_iter().map(|x| 0.5 * x).collect();
    let decay = heat_multiplier(&grid, dt);
    // ∫_0^dt e^{-λ s} ds
    let slab: Vec<f64> = lambda
        .iter()
        .map(|&l| if l == 0.0 { dt } else { -(-l * dt).exp_m1() / l })
        .collect();
    let len = grid.len();
    let mut acc = Spectrum::zeros(grid, forcing[0].channels());
    let mut duhamel = vec![acc.clone(); m + 1];
    for k in (0..m).rev() {
        let (lo, hi) = (&forcing[k], &forcing[k + 1]);
        for (c, chunk) in acc.data_mut().chunks_mut(len).enumerate() {
            let lo = lo.channel(c);
            let hi = hi.channel(c);
            for i in 0..len {
                chunk[i] = chunk[i] * decay[i] + (lo[i] + hi[i]) * (0.5 * slab[i]);
            }
        }
        duhamel[k] = acc.clone();
    }
    match terminal {
        None => duhamel.into_iter().map(|mut d| {
            d.data_mut().iter_mut().for_each(|z| *z = -*z);
            d
        }).collect(),
        Some(psi) => duhamel
            .into_par_iter()
            .enumerate()
            .map(|(k, d)| {
                let mut out = psi.with_real(&heat_multiplier(&grid, time.horizon() - time.node(k)));
                out.axpy(-1.0, &d);
                out
            })
            .collect(),
    }
}

fn spectra_of(l: &TimeField) -> Vec<Spectrum> {
    l.snapshots().par_iter().map(Spectrum::from_field).collect()
}

/// `∫_t^T P(r - t) l(r) dr` at every node.
pub fn duhamel_all(l: &TimeField) -> Result<TimeField> {
    if !l.is_finite() {
        return Err(Error::NonFinite("duhamel forcing"));
    }
    let spectra = mild_spectra(l.time(), None, &spectra_of(l));
    let snaps: Vec<Field> = spectra.par_iter().map(|s| s.to_field().scaled(-1.0)).collect();
    TimeField::new(*l.time(), snaps)
}

/// `∫_t^T P(r - t) l(r) dr` at node `k`.
pub fn duhamel(l: &TimeField, k: usize) -> Result<Field> {
    if k > l.time().steps() {
        return Err(Error::InvalidArgument(format!("node {k} beyond the time grid")));
    }
    if !l.is_finite() {
        return Err(Error::NonFinite("duhamel forcing"));
    }
    let m = l.time().steps();
    let tail = TimeGrid::new(l.time().horizon() - l.time().node(k), m - k).ok();
    match tail {
        None => Ok(Field::zeros(*l.grid(), l.channels())),
        Some(tg) => {
            let part = spectra_of(&TimeField { time: tg, snapshots: l.snapshots()[k..].to_vec() });
            Ok(mild_spectra(&tg, None, &part)[0].to_field().scaled(-1.0))
        }
    }
}

fn check_dimension(param: &ParamSet, grid: &GridSpec) -> Result<()> {
    if param.d() != grid.dim() {
        return Err(Error::Mismatch(format!(
            "parameter set has d = {} but the grid has d = {}",
            param.d(),
            grid.dim()
        )));
    }
    Ok(())
}

/// `φ(t) = P(T-t)Ψ - ∫_t^T P(r-t) l(r) dr`, with `φ(T) = Ψ` exactly.
pub fn solve_linear_phi(l: &TimeField, psi: &Field, param: &ParamSet) -> Result<TimeField> {
    check_dimension(param, l.grid())?;
    l.snapshot(0).check_layout(psi)?;
    psi.ensure_finite("terminal condition")?;
    if !l.is_finite() {
        return Err(Error::NonFinite("linear forcing"));
    }
    let spectra = mild_spectra(l.time(), Some(&Spectrum::from_field(psi)), &spectra_of(l));
    let m = l.time().steps();
    let mut snaps: Vec<Field> = spectra[..m].par_iter().map(Spectrum::to_field).collect();
    snaps.push(psi.clone());
    TimeField::new(*l.time(), snaps)
}

/// `max_k (‖φ(t_k)‖ - ‖Ψ‖) / ((T - t_k)^{(1-δ-β)/2} sup_r ‖l(r)‖_{H^{-β}_p})`
/// in the `H^{1+δ}_p` norm: the constant in the a priori bound of `φ`.
pub fn linear_regularity_constant(phi: &TimeField, psi: &Field, l: &TimeField, param: &ParamSet) -> Result<f64> {
    let idx = param.solution_index();
    let base = sobolev_norm(psi, idx)?;
    let forcing = l.sup_norm(param.product_index())?;
    if forcing == 0.0 {
        return Ok(0.0);
    }
    let expo = 0.5 * (1.0 - param.delta() - param.beta());
    let t_end = phi.time().horizon();
    let mut c: f64 = 0.0;
    for k in 0..phi.time().steps() {
        let gap = (t_end - phi.time().node(k)).powf(expo);
        c = c.max((sobolev_norm(phi.snapshot(k), idx)? - base) / (gap * forcing));
    }
    Ok(c)
}

/// `max_k ‖∂_t φ + ½Δφ - l‖_∞` over interior nodes, with fourth-order central
/// differences in time and the spectral Laplacian in space.
pub fn fd_residual(phi: &TimeField, l: &TimeField) -> Result<f64> {
    if phi.time() != l.time() {
        return Err(Error::Mismatch("time grids differ".into()));
    }
    let m = phi.time().steps();
    if m < 4 {
        return Err(Error::InvalidArgument("residual needs at least 4 time steps".into()));
    }
    let dt = phi.time().dt();
    let res = (2..=m - 2)
        .into_par_iter()
        .map(|k| {
            let s = |j: usize| phi.snapshot(j).values();
            let lap = laplacian(phi.snapshot(k))?;
            let mut worst: f64 = 0.0;
            for i in 0..lap.values().len() {
                let dtphi = (-s(k + 2)[i] + 8.0 * s(k + 1)[i] - 8.0 * s(k - 1)[i] + s(k - 2)[i]) / (12.0 * dt);
                worst = worst.max((dtphi + 0.5 * lap.values()[i] - l.snapshot(k).values()[i]).abs());
            }
            Ok(worst)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(res.into_iter().fold(0.0, f64::max))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialGuess {
    /// `u⁰(t) = P(T - t)Φ`
    #[default]
    Terminal,
    /// `u⁰ = 0`
    Zero,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PicardOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Weight override; by default chosen by `contraction_rho`.
    pub rho: Option<f64>,
    /// Constant fed to `contraction_rho`; by default estimated from `b` and `f`.
    pub c_emp: Option<f64>,
    pub initial: InitialGuess,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 200, rho: None, c_emp: None, initial: InitialGuess::Terminal }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    /// `‖u^{k+1} - u^k‖` with weight `e^{-ρ(T-t)}`, in `H^{1+δ}_p`.
    pub increments: Vec<f64>,
    /// The same increments without the weight.
    pub plain_increments: Vec<f64>,
    /// Ratios of consecutive weighted increments.
    pub factors: Vec<f64>,
    /// Largest ratio of consecutive weighted increments.
    pub contraction_factor: f64,
    /// Largest `√(w_{k+2} / w_k)` over the weighted increments. Rough drifts
    /// make the one-step ratio alternate around 1 while the iteration still
    /// converges; this two-step rate stays below 1 in that regime.
    #[serde(default)]
    pub two_step_factor: f64,
    /// `sup_t ‖u - (P(T-·)Φ - duhamel(l_u))‖_{H^{1+δ}_p}`.
    pub residual: f64,
    pub rho: f64,
    pub c_emp: f64,
    pub sup_sobolev: f64,
    pub sup_holder: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

struct PicardMap<'a> {
    b: &'a TimeField,
    f: &'a dyn LipschitzDriver,
    terminal_hat: Spectrum,
}

impl PicardMap<'_> {
    /// Spectra of `P(T-·)Φ - duhamel(l_u)` from the spectra of `u`.
    fn apply(&self, u: &[Spectrum]) -> Result<Vec<Spectrum>> {
        let time = self.b.time();
        let grid = *self.b.grid();
        let m_ch = self.terminal_hat.channels();
        let forcing = u
            .par_iter()
            .enumerate()
            .map(|(k, uk)| {
                let grad = gradient_of_spectrum(uk);
                let mut l = contract_gradient(&grad, self.b.snapshot(k))?.scaled(-1.0);
                if !self.f.is_zero() {
                    let t = time.node(k);
                    let field = uk.to_field();
                    let len = grid.len();
                    let d = grid.dim();
                    let mut y = vec![0.0; m_ch];
                    let mut z = vec![0.0; d * m_ch];
                    let mut out = vec![0.0; m_ch];
                    for i in 0..len {
                        let x = grid.node(i);
                        for c in 0..m_ch {
                            y[c] = field.values()[c * len + i];
                        }
                        for c in 0..d * m_ch {
                            z[c] = grad.values()[c * len + i];
                        }
                        self.f.eval(t, &x[..d], &y, &z, &mut out);
                        for c in 0..m_ch {
                            if !out[c].is_finite() {
                                return Err(Error::NonFiniteDriver { t });
                            }
                            l.values_mut()[c * len + i] -= out[c];
                        }
                    }
                }
                Ok(Spectrum::from_field(&l))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(mild_spectra(time, Some(&self.terminal_hat), &forcing))
    }
}

fn increments(time: &TimeGrid, a: &[Spectrum], b: &[Spectrum], idx: SobolevIndex, rho: f64) -> (f64, f64) {
    let norms: Vec<f64> = a
        .par_iter()
        .zip(b)
        .map(|(x, y)| {
            let mut d = x.clone();
            d.axpy(-1.0, y);
            sobolev_norm_of_spectrum(&d, idx)
        })
        .collect();
    let t_end = time.horizon();
    let mut weighted: f64 = 0.0;
    let mut plain: f64 = 0.0;
    for (k, n) in norms.into_iter().enumerate() {
        weighted = weighted.max((-rho * (t_end - time.node(k))).exp() * n);
        plain = plain.max(n);
    }
    (weighted, plain)
}

/// Fits `c` in `c (ρ^{(δ-1)/2} + ρ^{(δ+β-1)/2})` from the ratio of the first
/// two Picard increments at `ρ = 1`.
fn fit_c_emp(map: &PicardMap, start: &[Spectrum], idx: SobolevIndex, param: &ParamSet) -> Result<f64> {
    let time = map.b.time();
    let u1 = map.apply(start)?;
    let u2 = map.apply(&u1)?;
    let (first, _) = increments(time, &u1, start, idx, 1.0);
    let (second, _) = increments(time, &u2, &u1, idx, 1.0);
    if !(first.is_finite() && second.is_finite()) {
        return Err(Error::NonFinite("Picard probe"));
    }
    if first == 0.0 {
        return Ok(0.0);
    }
    Ok(second / first / param.contraction_shape(1.0))
}

/// Weighted increments below this multiple of `tol` are at round-off level;
/// their ratios say nothing about contraction.
const NOISE_FLOOR: f64 = 1e-3;

type PicardHistory = (Vec<Spectrum>, f64, Vec<f64>, Vec<f64>, Vec<f64>);

fn picard_loop(map: &PicardMap, start: &[Spectrum], idx: SobolevIndex, rho: f64, opts: &PicardOptions) -> Result<PicardHistory> {
    let time = *map.b.time();
    let mut u = start.to_vec();
    let mut weighted_incs: Vec<f64> = Vec::new();
    let mut plain_incs = Vec::new();
    let mut factors = Vec::new();
    let mut streak = 0;
    for _ in 0..opts.max_iter {
        let next = map.apply(&u)?;
        let (w, p) = increments(&time, &next, &u, idx, rho);
        if !(w.is_finite() && p.is_finite()) {
            return Err(Error::NonFinite("Picard iterate"));
        }
        if let Some(&prev) = weighted_incs.last() {
            let factor: f64 = if prev > 0.0 { w / prev } else { 0.0 };
            factors.push(factor);
            if factor >= 1.0 && prev > NOISE_FLOOR * opts.tol {
                streak += 1;
                if streak >= 3 {
                    return Err(Error::NonContraction { factor });
                }
            } else {
                streak = 0;
            }
        }
        weighted_incs.push(w);
        plain_incs.push(p);
        u = next;
        if w < opts.tol && p < opts.tol {
            return Ok((u, rho, weighted_incs, plain_incs, factors));
        }
    }
    Err(Error::MaxIterations { tol: opts.tol, max_iter: opts.max_iter, last: weighted_incs.last().copied().unwrap_or(f64::NAN) })
}

/// Picard iteration for `u(t) = P(T-t)Φ + ∫_t^T P(r-t)[∇u* b + f(r, ·, u, ∇u)] dr`.
pub fn solve_semilinear_u(
    b: &CertifiedDriver,
    f: &dyn LipschitzDriver,
    terminal: &Field,
    param: &ParamSet,
    opts: &PicardOptions,
) -> Result<(TimeField, SolveReport)> {
    solve_semilinear_from(b, f, terminal, param, opts, None)
}

/// [`solve_semilinear_u`] started from an arbitrary first iterate instead of
/// `opts.initial`.
pub fn solve_semilinear_from(
    b: &CertifiedDriver,
    f: &dyn LipschitzDriver,
    terminal: &Field,
    param: &ParamSet,
    opts: &PicardOptions,
    first: Option<&TimeField>,
) -> Result<(TimeField, SolveReport)> {
    let started = Instant::now();
    let bf = b.field();
    let grid = *bf.grid();
    check_dimension(param, &grid)?;
    terminal.check_grid(bf.snapshot(0))?;
    terminal.ensure_finite("terminal condition")?;
    if bf.channels() != grid.dim() {
        return Err(Error::Mismatch(format!("drift has {} channels on a {}-d grid", bf.channels(), grid.dim())));
    }
    if (bf.time().horizon() - param.horizon()).abs() > 1e-12 * param.horizon() {
        return Err(Error::Mismatch(format!(
            "drift horizon {} differs from T = {}",
            bf.time().horizon(),
            param.horizon()
        )));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let time = *bf.time();
    let idx = param.solution_index();
    let degenerate = terminal.values().iter().all(|&v| v == 0.0)
        && bf.snapshots().iter().all(|s| s.values().iter().all(|&v| v == 0.0))
        && f.is_zero();
    if degenerate {
        let u = TimeField::zeros(time, grid, terminal.channels());
        let (rho, c_emp) = (opts.rho.unwrap_or(1.0), opts.c_emp.unwrap_or(0.0));
        let report = SolveReport {
            iterations: 0,
            increments: vec![],
            plain_increments: vec![],
            factors: vec![],
            contraction_factor: 0.0,
            two_step_factor: 0.0,
            residual: 0.0,
            rho,
            c_emp,
            sup_sobolev: 0.0,
            sup_holder: 0.0,
            wall_time_s: Some(started.elapsed().as_secs_f64()),
        };
        return Ok((u, report));
    }

    let map = PicardMap { b: bf, f, terminal_hat: Spectrum::from_field(terminal) };
    let zero_forcing = vec![Spectrum::zeros(grid, terminal.channels()); time.steps() + 1];
    if let Some(g) = first {
        if g.time() != &time || g.channels() != terminal.channels() {
            return Err(Error::Mismatch("first iterate does not match the drift grids".into()));
        }
        terminal.check_grid(g.snapshot(0))?;
        if !g.is_finite() {
            return Err(Error::NonFinite("first iterate"));
        }
    }
    let start = match (first, opts.initial) {
        (Some(g), _) => spectra_of(g),
        (None, InitialGuess::Terminal) => mild_spectra(&time, Some(&map.terminal_hat), &zero_forcing),
        (None, InitialGuess::Zero) => zero_forcing.clone(),
    };
    let c_emp = match opts.c_emp {
        Some(c) => c,
        None => fit_c_emp(&map, &start, idx, param)?,
    };
    let mut rho = match opts.rho {
        Some(r) => r,
        None if c_emp == 0.0 => 1.0,
        None => contraction_rho(param, c_emp)?,
    };
    let (u, rho, weighted_incs, plain_incs, factors) = loop {
        match picard_loop(&map, &start, idx, rho, opts) {
            Err(Error::NonContraction { .. }) if opts.rho.is_none() && rho * 4.0 <= RHO_CEILING => rho *= 4.0,
            other => break other?,
        }
    };
    let again = map.apply(&u)?;
    let (_, residual) = increments(&time, &again, &u, idx, 0.0);

    let m = time.steps();
    let mut snaps: Vec<Field> = u[..m].par_iter().map(Spectrum::to_field).collect();
    snaps.push(terminal.clone());
    let solution = TimeField::new(time, snaps)?;
    if !solution.is_finite() {
        return Err(Error::NonFinite("semilinear solution"));
    }
    let sup_sobolev = solution.sup_norm(idx)?;
    let holders = solution
        .snapshots()
        .par_iter()
        .map(|s| holder_norm(s, HolderFlavor::OnePlus, param.alpha()))
        .collect::<Result<Vec<_>>>()?;
    let report = SolveReport {
        iterations: weighted_incs.len(),
        contraction_factor: factors.iter().cloned().fold(0.0, f64::max),
        two_step_factor: weighted_incs
            .windows(3)
            .filter(|w| w[0] > NOISE_FLOOR * opts.tol)
            .map(|w| (w[2] / w[0]).sqrt())
            .fold(0.0, f64::max),
        increments: weighted_incs,
        plain_increments: plain_incs,
        factors,
        residual,
        rho,
        c_emp,
        sup_sobolev,
        sup_holder: holders.into_iter().fold(0.0, f64::max),
        wall_time_s: Some(started.elapsed().as_secs_f64()),
    };
    Ok((solution, report))
}

/// Applies the Picard map once to a given `u`, returning
/// `P(T-·)Φ - duhamel(l_u)`.
pub fn picard_image(
    b: &CertifiedDriver,
    f: &dyn LipschitzDriver,
    terminal: &Field,
    u: &TimeField,
) -> Result<TimeField> {
    let map = PicardMap { b: b.field(), f, terminal_hat: Spectrum::from_field(terminal) };
    let spectra: Vec<Spectrum> = u.snapshots().par_iter().map(Spectrum::from_field).collect();
    let out = map.apply(&spectra)?;
    let m = u.time().steps();
    let mut snaps: Vec<Field> = out[..m].par_iter().map(Spectrum::to_field).collect();
    snaps.push(terminal.clone());
    TimeField::new(*u.time(), snaps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParamCandidate;
    use std::f64::consts::PI;

    fn setup(n: usize, m: usize) -> (GridSpec, TimeGrid, ParamSet) {
        let p = ParamCandidate::new(0.3, 3.0, 0.5, 2.5, 1).validate().unwrap();
        (GridSpec::line(n, 10.0).unwrap(), TimeGrid::new(1.0, m).unwrap(), p)
    }

    #[test]
    fn time_grid_nodes() {
        let t = TimeGrid::new(0.3, 7).unwrap();
        assert_eq!(t.node(7), 0.3);
        assert_eq!(t.node(0), 0.0);
        assert!(TimeGrid::new(0.0, 3).is_err());
        let fine = TimeGrid::new(0.3, 28).unwrap();
        assert_eq!(fine.refinement_of(&t), Some(4));
        assert_eq!(t.refinement_of(&fine), None);
    }

    #[test]
    fn constant_forcing_gives_linear_profile() {
        let (g, t, p) = setup(64, 32);
        let c = 1.75;
        let l = TimeField::constant(t, &Field::constant(g, 1, c));
        let phi = solve_linear_phi(&l, &Field::zeros(g, 1), &p).unwrap();
        for k in 0..=32 {
            let expect = -c * (1.0 - t.node(k));
            for v in phi.snapshot(k).values() {
                assert!((v - expect).abs() < 1e-12);
            }
        }
        assert!(fd_residual(&phi, &l).unwrap() < 1e-10);
    }

    #[test]
    fn single_node_duhamel_matches_sweep() {
        let (g, t, _) = setup(32, 16);
        let l = TimeField::from_fn(t, |s| Field::scalar_from_fn(g, |x| (s * 3.0).sin() * (-x[0] * x[0]).exp()))
            .unwrap();
        let all = duhamel_all(&l).unwrap();
        for k in [0, 5, 15, 16] {
            let one = duhamel(&l, k).unwrap();
            assert!(one.max_abs_diff(all.snapshot(k)).unwrap() < 1e-13);
        }
    }

    #[test]
    fn mode_forcing_closed_form() {
        let (g, t, _) = setup(128, 256);
        let xi = PI * 4.0 / 10.0;
        let mode = Field::scalar_from_fn(g, |x| (xi * x[0]).cos());
        let d = duhamel_all(&TimeField::constant(t, &mode)).unwrap();
        for k in [0, 100, 255] {
            let gap = 1.0 - t.node(k);
            let amp = (1.0 - (-gap * xi * xi / 2.0).exp()) * 2.0 / (xi * xi);
            assert!(d.snapshot(k).max_abs_diff(&mode.scaled(amp)).unwrap() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let (_, t, p) = setup(16, 4);
        let g2 = GridSpec::new(2, 8, 10.0).unwrap();
        let l = TimeField::zeros(t, g2, 1);
        assert!(solve_linear_phi(&l, &Field::zeros(g2, 1), &p).is_err());
    }
}
