//! Monte Carlo construction and verification of `Y_t = u(t, W_t)`.
//!
//! Given the mild solution `u`, the process
//! `M_t = Y_t - Y_0 + A^{W,Y}_t(b) + Σ f(t_k, W_k, Y_k, Z_k) dt`
//! must be a square-integrable martingale equal to `∫ ∇u*(r, W_r) dW_r`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::drivers::CertifiedDriver;
use crate::error::{Error, Result};
use crate::grid::Field;
use crate::interp::{InterpOrder, Stencil};
use crate::mild::TimeField;
use crate::occupation::{
    a_wy_operator, covariation, BrownianPath, ChainRuleOperator, EnsembleSpec, PathSampler, SamplePath,
};
use crate::params::{LipschitzDriver, ParamSet};
use crate::stats::{self, Estimate};

#[derive(Clone, Debug)]
pub struct BsdeSolution {
    /// `u(t_k, W_k)`
    pub y: SamplePath,
    /// `∇u(t_k, W_k)` with component `i * m + j = ∂_i u_j`.
    pub z: SamplePath,
    pub m: SamplePath,
    /// `Σ Z_k* ΔW_k`
    pub m_hat: SamplePath,
}

/// A candidate solution `γ` of the PDE together with everything needed to
/// assemble the BSDE along paths.
pub struct BsdeModel<'a> {
    gamma: TimeField,
    grad: TimeField,
    occupation: ChainRuleOperator,
    f: &'a dyn LipschitzDriver,
    sampler: PathSampler,
}

impl<'a> BsdeModel<'a> {
    /// `gamma` is usually the output of `solve_semilinear_u`; any field with
    /// `gamma(T) = Φ` is accepted so that perturbed candidates can be probed.
    pub fn new(
        gamma: TimeField,
        b: &CertifiedDriver,
        f: &'a dyn LipschitzDriver,
        param: &ParamSet,
        order: InterpOrder,
    ) -> Result<Self> {
        let occupation = a_wy_operator(b.field(), &gamma, param, order)?;
        let grad = gamma.gradient()?;
        let sampler = PathSampler::new(gamma.grid(), order);
        Ok(Self { gamma, grad, occupation, f, sampler })
    }

    pub fn gamma(&self) -> &TimeField {
        &self.gamma
    }

    pub fn grad(&self) -> &TimeField {
        &self.grad
    }

    pub fn occupation(&self) -> &ChainRuleOperator {
        &self.occupation
    }

    /// `sup_{t,x} |∇γ|` over the grid.
    pub fn grad_sup(&self) -> f64 {
        self.grad.snapshots().iter().map(Field::sup_norm).fold(0.0, f64::max)
    }

    pub fn terminal(&self) -> &Field {
        self.gamma.snapshot(self.gamma.time().steps())
    }

    fn ratio(&self, path: &BrownianPath) -> Result<usize> {
        path.time().refinement_of(self.gamma.time()).ok_or_else(|| {
            Error::Mismatch("path time grid does not refine the solution time grid".into())
        })
    }

    pub fn assemble(&self, path: &BrownianPath) -> Result<BsdeSolution> {
        let time = *path.time();
        let ratio = self.ratio(path)?;
        let d = path.dim();
        let m = self.gamma.channels();
        let grid = *self.gamma.grid();
        let dt = time.dt();
        let mut y = SamplePath::zeros(time, m);
        let mut z = SamplePath::zeros(time, d * m);
        let mut fbuf = vec![0.0; m];
        let mut drift = vec![0.0; m];
        let mut driver_sum = SamplePath::zeros(time, m);
        for n in 0..=time.steps() {
            let x = path.position(n);
            self.sampler.check(path.path_id(), time.node(n), x)?;
            let st = Stencil::new(&grid, self.sampler.order, x);
            self.sampler.eval(&self.gamma, ratio, n, &st, y.at_mut(n));
            self.sampler.eval(&self.grad, ratio, n, &st, z.at_mut(n));
            driver_sum.at_mut(n).copy_from_slice(&drift);
            if n < time.steps() && !self.f.is_zero() {
                let t = time.node(n);
                self.f.eval(t, x, y.at(n), z.at(n), &mut fbuf);
                for (a, v) in drift.iter_mut().zip(&fbuf) {
                    if !v.is_finite() {
                        return Err(Error::NonFiniteDriver { t });
                    }
                    *a += v * dt;
                }
            }
        }
        let a = self.occupation.apply(path)?;
        let mut mart = SamplePath::zeros(time, m);
        let mut m_hat = SamplePath::zeros(time, m);
        let mut ito = vec![0.0; m];
        for n in 0..=time.steps() {
            if n > 0 {
                let dw = path.increment(n - 1);
                let zk = z.at(n - 1);
                for j in 0..m {
                    for i in 0..d {
                        ito[j] += zk[i * m + j] * dw[i];
                    }
                }
            }
            m_hat.at_mut(n).copy_from_slice(&ito);
            let y0 = y.at(0).to_vec();
            let slot = mart.at_mut(n);
            for j in 0..m {
                slot[j] = y.at(n)[j] - y0[j] + a.path.at(n)[j] + driver_sum.at(n)[j];
            }
        }
        Ok(BsdeSolution { y, z, m: mart, m_hat })
    }

    /// Feynman-Kac estimate of `γ(s, x0)` from the paths of `ensemble`,
    /// restarted at `s` from `x0`.
    pub fn feynman_kac(&self, s: f64, x0: &[f64], ensemble: &EnsembleSpec) -> Result<FeynmanKacEstimate> {
        let time = ensemble.time;
        let start = time.nearest(s);
        if (time.node(start) - s).abs() > 1e-9 * time.horizon() {
            return Err(Error::InvalidArgument(format!("s = {s} is not a node of the path grid")));
        }
        let grid = *self.gamma.grid();
        self.sampler.check(u64::MAX, s, x0)?;
        let m = self.gamma.channels();
        let d = grid.dim();
        let values = ensemble.map(|path| {
            let ratio = self.ratio(path)?;
            let base = path.position(start).to_vec();
            let point = |k: usize| -> Vec<f64> {
                path.position(k).iter().zip(&base).zip(x0).map(|((w, b), o)| o + w - b).collect()
            };
            let dt = time.dt();
            let mut acc = vec![0.0; m];
            let mut yk = vec![0.0; m];
            let mut zk = vec![0.0; d * m];
            let mut fk = vec![0.0; m];
            if !self.f.is_zero() {
                for k in start..time.steps() {
                    let x = point(k);
                    self.sampler.check(path.path_id(), time.node(k), &x)?;
                    let st = Stencil::new(&grid, self.sampler.order, &x);
                    self.sampler.eval(&self.gamma, ratio, k, &st, &mut yk);
                    self.sampler.eval(&self.grad, ratio, k, &st, &mut zk);
                    self.f.eval(time.node(k), &x, &yk, &zk, &mut fk);
                    for (a, v) in acc.iter_mut().zip(&fk) {
                        *a += v * dt;
                    }
                }
            }
            let a = self.occupation.apply_from(path, start, Some(x0))?;
            let xt = point(time.steps());
            self.sampler.check(path.path_id(), time.horizon(), &xt)?;
            let mut phi_t = vec![0.0; m];
            Stencil::new(&grid, self.sampler.order, &xt).apply(self.terminal(), &mut phi_t);
            Ok((0..m).map(|j| phi_t[j] + acc[j] + a.path.terminal()[j]).collect::<Vec<f64>>())
        })?;
        let comp: Vec<Estimate> = (0..m)
            .map(|j| Estimate::from_samples(&values.iter().map(|v| v[j]).collect::<Vec<_>>()))
            .collect();
        let mut reference = vec![0.0; m];
        let ratio = time.refinement_of(self.gamma.time()).ok_or_else(|| Error::Mismatch("path grid".into()))?;
        self.sampler.eval(&self.gamma, ratio, start, &Stencil::new(&grid, self.sampler.order, x0), &mut reference);
        Ok(FeynmanKacEstimate { s, x0: x0.to_vec(), components: comp, reference })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FeynmanKacEstimate {
    pub s: f64,
    pub x0: Vec<f64>,
    pub components: Vec<Estimate>,
    /// `γ(s, x0)` interpolated from the grid solution.
    pub reference: Vec<f64>,
}

impl FeynmanKacEstimate {
    /// `|estimate - reference| ≤ 3 stderr + tolerance` on every component.
    pub fn consistent(&self, tolerance: f64) -> bool {
        self.components
            .iter()
            .zip(&self.reference)
            .all(|(e, r)| (e.mean - r).abs() <= 3.0 * e.stderr + tolerance)
    }

    pub fn worst_gap(&self) -> f64 {
        self.components
            .iter()
            .zip(&self.reference)
            .map(|(e, r)| (e.mean - r).abs() - 3.0 * e.stderr)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Per-path values needed by [`martingale_test`].
#[derive(Clone, Debug)]
pub struct MartingaleSample {
    pub terminal: Vec<f64>,
    /// `(M_s, W_s)` at each conditioning node.
    pub conditioned: Vec<(Vec<f64>, Vec<f64>)>,
}

impl MartingaleSample {
    pub fn extract(m: &SamplePath, w: &SamplePath, nodes: &[usize]) -> Self {
        Self {
            terminal: m.terminal().to_vec(),
            conditioned: nodes.iter().map(|&k| (m.at(k).to_vec(), w.at(k).to_vec())).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestFunction {
    Sin,
    Cos,
    Tanh,
}

impl TestFunction {
    pub const ALL: [TestFunction; 3] = [TestFunction::Sin, TestFunction::Cos, TestFunction::Tanh];

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            TestFunction::Sin => x.sin(),
            TestFunction::Cos => x.cos(),
            TestFunction::Tanh => x.tanh(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MartingaleEntry {
    pub name: String,
    pub statistic: f64,
    pub stderr: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MartingaleReport {
    pub paths: usize,
    pub entries: Vec<MartingaleEntry>,
    /// `E|M_T|²`
    pub second_moment: Estimate,
    pub pass: bool,
    /// Smallest two-sided normal p-value over the entries.
    pub min_p_value: f64,
}

/// Conditioning nodes at `T/4` and `T/2`.
pub fn default_conditioning(steps: usize) -> Vec<usize> {
    vec![steps / 4, steps / 2]
}

/// (a) zero mean of `M_T`; (b) `E[(M_T - M_s) g(W_s)] = 0` for bounded
/// `g ∈ {sin, cos, tanh}` of each coordinate; (c) the second moment, reported.
/// Every statistic must lie within 3 standard errors of zero.
pub fn martingale_test(samples: &[MartingaleSample], conditioning_labels: &[f64]) -> Result<MartingaleReport> {
    let first = samples.first().ok_or_else(|| Error::InvalidArgument("empty ensemble".into()))?;
    let m = first.terminal.len();
    let mut entries = Vec::new();
    let mut push = |name: String, vals: Vec<f64>| {
        let e = Estimate::from_samples(&vals);
        entries.push(MartingaleEntry { name, statistic: e.mean, stderr: e.stderr, pass: e.within(0.0, 3.0) });
    };
    for j in 0..m {
        push(format!("mean M_T[{j}]"), samples.iter().map(|s| s.terminal[j]).collect());
    }
    for (ci, (_, w0)) in first.conditioned.iter().enumerate() {
        let label = conditioning_labels.get(ci).copied().unwrap_or(ci as f64);
        for i in 0..w0.len() {
            for g in TestFunction::ALL {
                for j in 0..m {
                    let vals = samples
                        .iter()
                        .map(|s| {
                            let (ms, ws) = &s.conditioned[ci];
                            (s.terminal[j] - ms[j]) * g.eval(ws[i])
                        })
                        .collect();
                    push(format!("E[(M_T - M_s)[{j}] {g:?}(W_s[{i}])], s = {label}"), vals);
                }
            }
        }
    }
    let sq: Vec<f64> = samples.iter().map(|s| s.terminal.iter().map(|v| v * v).sum()).collect();
    let min_p_value = entries
        .iter()
        .map(|e| if e.stderr > 0.0 { stats::two_sided_p(e.statistic / e.stderr) } else if e.statistic == 0.0 { 1.0 } else { 0.0 })
        .fold(1.0, f64::min);
    let pass = entries.iter().all(|e| e.pass);
    Ok(MartingaleReport {
        paths: samples.len(),
        entries,
        second_moment: Estimate::from_samples(&sq),
        pass,
        min_p_value,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BsdeVerification {
    pub paths: usize,
    pub steps: usize,
    /// `max_paths |Y_T - Φ(W_T)|`
    pub terminal_gap: f64,
    /// `max_paths sup_t |M - M̂| / √dt`
    pub proof_identity_constant: f64,
    /// Ensemble mean of `sup_t |M - M̂|`.
    pub proof_identity_mean: f64,
    pub martingale: MartingaleReport,
    /// `(sup|∇u|)² T d`
    pub second_moment_bound: f64,
    pub second_moment_ok: bool,
    pub z_bounded: bool,
}

/// Assembles the BSDE on every path of `ensemble` and runs all checks.
pub fn verify_bsde(model: &BsdeModel, ensemble: &EnsembleSpec) -> Result<BsdeVerification> {
    let time = ensemble.time;
    let nodes = default_conditioning(time.steps());
    let labels: Vec<f64> = nodes.iter().map(|&k| time.node(k)).collect();
    let grid = *model.gamma.grid();
    let grad_sup = model.grad_sup();
    let rows = ensemble.map(|path| {
        let sol = model.assemble(path)?;
        let mut phi = vec![0.0; model.gamma.channels()];
        Stencil::new(&grid, model.sampler.order, path.position(time.steps())).apply(model.terminal(), &mut phi);
        let gap = sol.y.terminal().iter().zip(&phi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let identity = sol.m.sup_distance(&sol.m_hat)?;
        let z_max = (0..=time.steps())
            .map(|k| sol.z.at(k).iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        Ok((gap, identity, z_max, MartingaleSample::extract(&sol.m, path.positions(), &nodes)))
    })?;
    let samples: Vec<MartingaleSample> = rows.iter().map(|r| r.3.clone()).collect();
    let identities: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let martingale = martingale_test(&samples, &labels)?;
    let bound = grad_sup * grad_sup * time.horizon() * ensemble.dim as f64;
    let second_moment_ok = martingale.second_moment.mean <= bound + 3.0 * martingale.second_moment.stderr;
    Ok(BsdeVerification {
        paths: ensemble.paths,
        steps: time.steps(),
        terminal_gap: rows.iter().map(|r| r.0).fold(0.0, f64::max),
        proof_identity_constant: identities.iter().cloned().fold(0.0, f64::max) / time.dt().sqrt(),
        proof_identity_mean: stats::mean(&identities),
        martingale,
        second_moment_bound: bound,
        second_moment_ok,
        z_bounded: rows.iter().all(|r| r.2 <= grad_sup * (1.0 + 1e-12) + 1e-12),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub paths: usize,
    pub steps: usize,
    /// Ensemble mean of `sup_t |[W, Y]_t - ∫ Z* dr|`.
    pub bracket_residual: f64,
    /// Ensemble mean of `sup_t |A^{W,Y}(b) - Σ Z* b dt|`.
    pub drift_residual: f64,
}

/// Checks `d[W, Y] = Z* dr` and `A^{W,Y}(b) = ∫ Z* b dr` along paths for a
/// smooth drift, evaluated pointwise by interpolation.
pub fn classical_equivalence_check(
    model: &BsdeModel,
    b: &CertifiedDriver,
    ensemble: &EnsembleSpec,
    lag: usize,
) -> Result<EquivalenceReport> {
    let time = ensemble.time;
    let grid = *model.gamma.grid();
    let bf = b.field();
    let rows = ensemble.map(|path| {
        let sol = model.assemble(path)?;
        let ratio = model.ratio(path)?;
        let d = path.dim();
        let m = model.gamma.channels();
        let dt = time.dt();
        let bracket = covariation(path.positions(), &sol.y, lag)?;
        let a = model.occupation.apply(path)?;
        let mut z_int = SamplePath::zeros(time, d * m);
        let mut zb = SamplePath::zeros(time, m);
        let mut acc_z = vec![0.0; d * m];
        let mut acc_b = vec![0.0; m];
        let mut bk = vec![0.0; d];
        for n in 0..time.steps() {
            let z = sol.z.at(n);
            let st = Stencil::new(&grid, model.sampler.order, path.position(n));
            model.sampler.eval(bf, ratio, n, &st, &mut bk);
            for c in 0..d * m {
                acc_z[c] += z[c] * dt;
            }
            for j in 0..m {
                for i in 0..d {
                    acc_b[j] += z[i * m + j] * bk[i] * dt;
                }
            }
            z_int.at_mut(n + 1).copy_from_slice(&acc_z);
            zb.at_mut(n + 1).copy_from_slice(&acc_b);
        }
        Ok((bracket.sup_distance(&z_int)?, a.path.sup_distance(&zb)?))
    })?;
    Ok(EquivalenceReport {
        paths: ensemble.paths,
        steps: time.steps(),
        bracket_residual: stats::mean(&rows.iter().map(|r| r.0).collect::<Vec<_>>()),
        drift_residual: stats::mean(&rows.iter().map(|r| r.1).collect::<Vec<_>>()),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProbeLevel {
    pub epsilon: f64,
    pub pass: bool,
    pub min_p_value: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UniquenessReport {
    pub mode: i64,
    pub paths: usize,
    pub levels: Vec<ProbeLevel>,
    /// Smallest probed ε that the martingale test rejected, if any.
    pub detection_threshold: Option<f64>,
}

/// `γ_alt = u + ε (T - t) sin(ξ_k x_0)`, which keeps `γ_alt(T) = Φ`.
pub fn perturbed_candidate(u: &TimeField, epsilon: f64, mode: i64) -> Result<TimeField> {
    let grid = *u.grid();
    let xi = grid.frequency_step() * mode as f64;
    let t_end = u.time().horizon();
    let bump = Field::from_fn(grid, u.channels(), |x, out| out.iter_mut().for_each(|o| *o = (xi * x[0]).sin()));
    let snaps = (0..=u.time().steps())
        .into_par_iter()
        .map(|k| {
            if k == u.time().steps() {
                return Ok(u.snapshot(k).clone());
            }
            bump.axpy(epsilon * (t_end - u.time().node(k)), u.snapshot(k))
        })
        .collect::<Result<Vec<_>>>()?;
    TimeField::new(*u.time(), snaps)
}

/// Runs the martingale test on perturbed candidates `γ_alt` for each `ε`.
pub fn uniqueness_probe(
    u: &TimeField,
    b: &CertifiedDriver,
    f: &dyn LipschitzDriver,
    param: &ParamSet,
    epsilons: &[f64],
    mode: i64,
    ensemble: &EnsembleSpec,
    order: InterpOrder,
) -> Result<UniquenessReport> {
    let time = ensemble.time;
    let nodes = default_conditioning(time.steps());
    let labels: Vec<f64> = nodes.iter().map(|&k| time.node(k)).collect();
    let mut levels = Vec::new();
    for &eps in epsilons {
        let model = BsdeModel::new(perturbed_candidate(u, eps, mode)?, b, f, param, order)?;
        let samples = ensemble.map(|path| {
            let sol = model.assemble(path)?;
            Ok(MartingaleSample::extract(&sol.m, path.positions(), &nodes))
        })?;
        let rep = martingale_test(&samples, &labels)?;
        levels.push(ProbeLevel { epsilon: eps, pass: rep.pass, min_p_value: rep.min_p_value });
    }
    let detection_threshold = levels.iter().filter(|l| !l.pass && l.epsilon > 0.0).map(|l| l.epsilon).fold(None, |acc: Option<f64>, e| {
        Some(acc.map_or(e, |a| a.min(e)))
    });
    Ok(UniquenessReport { mode, paths: ensemble.paths, levels, detection_threshold })
}
