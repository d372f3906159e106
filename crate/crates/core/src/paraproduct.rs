//! Products of a distribution with a function through dyadic Fourier truncation.
//!
//! `S^j g` keeps the modes of `g` with weight `ψ(|ξ| / 2^j)`. The product is the
//! limit of `S^j g · S^j h`; on a grid the limit is taken at the level `J` where
//! `S^J` is the identity, and the increments between consecutive levels are
//! reported as a Cauchy tail.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, GridSpec, Spectrum};
use crate::params::ParamSet;
use crate::spectral::{sobolev_norm, SobolevIndex};
use crate::synth::{AmplitudeProfile, FieldSynth};

/// Radial cutoff with `ψ = 1` on `[0, 1)` and `ψ = 0` on `[2, ∞)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutoffProfile {
    #[default]
    RaisedCosine,
    /// C^∞ transition built from `exp(-1/x)`.
    SmoothStep,
}

impl CutoffProfile {
    pub fn eval(&self, r: f64) -> f64 {
        if r < 1.0 {
            return 1.0;
        }
        if r >= 2.0 {
            return 0.0;
        }
        match self {
            CutoffProfile::RaisedCosine => 0.5 * (1.0 + (std::f64::consts::PI * (r - 1.0)).cos()),
            CutoffProfile::SmoothStep => {
                let g = |x: f64| if x > 0.0 { (-1.0 / x).exp() } else { 0.0 };
                let a = g(2.0 - r);
                a / (a + g(r - 1.0))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CutoffSpec {
    /// Truncation level; `None` selects the grid's Nyquist level.
    pub level: Option<u32>,
    pub profile: CutoffProfile,
}

/// Smallest `j` with `2^j` at or above the largest lattice frequency, so that
/// `S^j` acts as the identity.
pub fn nyquist_level(grid: &GridSpec) -> u32 {
    let top = grid.max_radius();
    let mut j = 0;
    while 2f64.powi(j as i32) < top {
        j += 1;
    }
    j
}

pub fn cutoff_multiplier(grid: &GridSpec, level: u32, profile: CutoffProfile) -> Vec<f64> {
    let scale = 2f64.powi(level as i32);
    grid.xi_squared().into_iter().map(|x2| profile.eval(x2.sqrt() / scale)).collect()
}

/// `S^j g`
pub fn smooth_truncate(g: &Field, level: u32, profile: CutoffProfile) -> Result<Field> {
    g.ensure_finite("smooth_truncate input")?;
    let mut spec = Spectrum::from_field(g);
    spec.apply_real(&cutoff_multiplier(g.grid(), level, profile));
    Ok(spec.to_field())
}

/// `(∇u* b)_j = Σ_i ∂_i u_j b_i`, sample by sample. `grad_u` has `d·m`
/// channels laid out as `i * m + j`, `b` has `d`.
pub fn contract_gradient(grad_u: &Field, b: &Field) -> Result<Field> {
    grad_u.check_grid(b)?;
    let d = b.channels();
    if d == 0 || grad_u.channels() % d != 0 {
        return Err(Error::Mismatch(format!(
            "gradient with {} channels cannot contract with a {}-vector",
            grad_u.channels(),
            d
        )));
    }
    let m = grad_u.channels() / d;
    let mut out = Field::zeros(*b.grid(), m);
    for j in 0..m {
        for i in 0..d {
            let g = grad_u.channel(i * m + j).to_vec();
            let bi = b.channel(i);
            for ((o, x), y) in out.channel_mut(j).iter_mut().zip(&g).zip(bi) {
                *o += x * y;
            }
        }
    }
    Ok(out)
}

/// How the two factors are combined sample by sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    /// Componentwise, a single-channel factor broadcasting over the other.
    Componentwise,
    /// `∇u* b` with the first factor a gradient.
    GradientContraction,
}

fn pair(g: &Field, h: &Field, pairing: Pairing) -> Result<Field> {
    match pairing {
        Pairing::Componentwise => g.mul_samples(h),
        Pairing::GradientContraction => contract_gradient(g, h),
    }
}

/// `S^J g · S^J h` at the requested level.
pub fn truncated_product(g: &Field, h: &Field, spec: CutoffSpec, pairing: Pairing) -> Result<Field> {
    g.check_grid(h)?;
    let top = nyquist_level(g.grid());
    let level = spec.level.unwrap_or(top);
    let out = if level >= top {
        pair(g, h, pairing)?
    } else {
        pair(&smooth_truncate(g, level, spec.profile)?, &smooth_truncate(h, level, spec.profile)?, pairing)?
    };
    out.ensure_finite("pointwise product")?;
    Ok(out)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProductReport {
    pub level: u32,
    /// `(j, ‖S^{j+1}g S^{j+1}h - S^j g S^j h‖)` for `j < level`.
    pub tails: Vec<(u32, f64)>,
}

impl ProductReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("j,tail_norm\n");
        for (j, t) in &self.tails {
            s.push_str(&format!("{j},{t}\n"));
        }
        s
    }

    /// Strict growth over the last three reported levels, ignoring increments
    /// that are negligible relative to `scale`.
    pub fn diverges(&self, scale: f64) -> bool {
        let floor = 1e-12 * scale.max(f64::MIN_POSITIVE);
        let n = self.tails.len();
        if n < 3 {
            return false;
        }
        let t: Vec<f64> = self.tails[n - 3..].iter().map(|x| x.1).collect();
        t[2] > floor && t[0] < t[1] && t[1] < t[2]
    }
}

/// The product together with its convergence report, with increments
/// measured in `report_idx`.
pub fn pointwise_product(
    g: &Field,
    h: &Field,
    spec: CutoffSpec,
    pairing: Pairing,
    report_idx: SobolevIndex,
) -> Result<(Field, ProductReport)> {
    g.check_grid(h)?;
    g.ensure_finite("pointwise product factor")?;
    h.ensure_finite("pointwise product factor")?;
    let grid = *g.grid();
    let top = nyquist_level(&grid);
    let level = spec.level.unwrap_or(top).min(top);
    let gs = Spectrum::from_field(g);
    let hs = Spectrum::from_field(h);
    let at = |j: u32| -> Result<Field> {
        if j >= top {
            return pair(g, h, pairing);
        }
        let m = cutoff_multiplier(&grid, j, spec.profile);
        pair(&gs.with_real(&m).to_field(), &hs.with_real(&m).to_field(), pairing)
    };
    let mut tails = Vec::new();
    let mut prev = at(0)?;
    for j in 0..level {
        let next = at(j + 1)?;
        tails.push((j, sobolev_norm(&next.sub(&prev)?, report_idx)?));
        prev = next;
    }
    prev.ensure_finite("pointwise product")?;
    let report = ProductReport { level, tails };
    let scale = sobolev_norm(&prev, report_idx)?;
    if report.diverges(scale) {
        return Err(Error::ProductNonConvergence { tails: report.tails.iter().map(|x| x.1).collect() });
    }
    Ok((prev, report))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProductBoundReport {
    pub n: usize,
    pub pairs_used: usize,
    pub max_ratio: f64,
}

/// Random rough factors in `H^{-β}_q`: derivative-of-Hölder-like spectrum.
pub fn rough_factor_synth() -> FieldSynth {
    FieldSynth::rough(AmplitudeProfile::Bessel { decay: 0.25 })
}

/// Random smooth factors in `H^δ_p`.
pub fn smooth_factor_synth(grid: &GridSpec) -> FieldSynth {
    FieldSynth::rough(AmplitudeProfile::Bessel { decay: 2.0 + 0.5 * grid.dim() as f64 })
}

/// `‖gh‖_{H^{-β}_p} / (‖g‖_{H^{-β}_q} ‖h‖_{H^δ_p})`; `None` when a factor vanishes.
pub fn product_ratio(g: &Field, h: &Field, param: &ParamSet) -> Result<Option<f64>> {
    let ng = sobolev_norm(g, param.drift_index())?;
    let nh = sobolev_norm(h, SobolevIndex::new(param.delta(), param.p())?)?;
    if ng == 0.0 || nh == 0.0 {
        return Ok(None);
    }
    let gh = truncated_product(g, h, CutoffSpec::default(), Pairing::Componentwise)?;
    Ok(Some(sobolev_norm(&gh, param.product_index())? / (ng * nh)))
}

pub fn product_bound_report(grid: &GridSpec, param: &ParamSet, samples: usize, seed: u64) -> Result<ProductBoundReport> {
    let rough = rough_factor_synth();
    let smooth = smooth_factor_synth(grid);
    let mut max_ratio: f64 = 0.0;
    let mut used = 0;
    for k in 0..samples as u64 {
        let g = rough.sample(grid, seed, 2 * k);
        let h = smooth.sample(grid, seed, 2 * k + 1);
        if let Some(r) = product_ratio(&g, &h, param)? {
            max_ratio = max_ratio.max(r);
            used += 1;
        }
    }
    Ok(ProductBoundReport { n: grid.n(), pairs_used: used, max_ratio })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn line(n: usize) -> GridSpec {
        GridSpec::line(n, 10.0).unwrap()
    }

    #[test]
    fn profiles_have_plateau_and_support() {
        for p in [CutoffProfile::RaisedCosine, CutoffProfile::SmoothStep] {
            assert_eq!(p.eval(0.0), 1.0);
            assert_eq!(p.eval(0.999), 1.0);
            assert_eq!(p.eval(2.0), 0.0);
            let mut last = 1.0;
            for i in 0..=100 {
                let v = p.eval(1.0 + i as f64 / 100.0);
                assert!((0.0..=1.0).contains(&v) && v <= last + 1e-15);
                last = v;
            }
        }
    }

    #[test]
    fn truncation_keeps_low_and_kills_high_modes() {
        let g = line(256);
        let lo = Field::scalar_from_fn(g, |x| (PI * 3.0 / 10.0 * x[0]).cos());
        // |ξ| ≈ 0.94 < 2^0
        let t = smooth_truncate(&lo, 0, CutoffProfile::RaisedCosine).unwrap();
        assert!(t.max_abs_diff(&lo).unwrap() < 1e-13);
        // |ξ| = 2π·... ≥ 2^{j+1} with j = 1
        let hi = Field::scalar_from_fn(g, |x| (PI * 20.0 / 10.0 * x[0]).sin());
        assert!(smooth_truncate(&hi, 1, CutoffProfile::RaisedCosine).unwrap().sup_norm() < 1e-13);
    }

    #[test]
    fn unit_factor_reproduces_other() {
        let g = line(128);
        let one = Field::constant(g, 1, 1.0);
        let h = rough_factor_synth().sample(&g, 5, 0);
        let idx = SobolevIndex::new(-0.3, 2.5).unwrap();
        let (p, rep) = pointwise_product(&one, &h, CutoffSpec::default(), Pairing::Componentwise, idx).unwrap();
        assert!(p.max_abs_diff(&h).unwrap() < 1e-12);
        assert_eq!(rep.level, nyquist_level(&g));
    }

    #[test]
    fn contraction_layout() {
        let g = GridSpec::new(2, 8, 1.0).unwrap();
        // m = 2 components, d = 2
        let grad = Field::from_fn(g, 4, |_, o| o.copy_from_slice(&[1.0, 2.0, 3.0, 4.0]));
        let b = Field::from_fn(g, 2, |_, o| o.copy_from_slice(&[10.0, 100.0]));
        let c = contract_gradient(&grad, &b).unwrap();
        // j = 0: ∂_0 u_0 b_0 + ∂_1 u_0 b_1 = 1·10 + 3·100
        assert_eq!(c.channel(0)[0], 310.0);
        assert_eq!(c.channel(1)[0], 420.0);
    }

    #[test]
    fn growing_tail_is_flagged() {
        let rep = ProductReport { level: 4, tails: vec![(0, 1.0), (1, 0.5), (2, 0.6), (3, 0.7)] };
        assert!(rep.diverges(1.0));
        let rep = ProductReport { level: 4, tails: vec![(0, 1.0), (1, 0.5), (2, 0.4), (3, 0.7)] };
        assert!(!rep.diverges(1.0));
        let tiny = ProductReport { level: 3, tails: vec![(0, 1e-20), (1, 2e-20), (2, 3e-20)] };
        assert!(!tiny.diverges(1.0));
    }
}
