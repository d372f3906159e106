//! Fourier-multiplier calculus on a [`Field`]: Bessel potentials, fractional
//! Sobolev norms, the heat semigroup, gradients and Hölder norms.
//!
//! With `λ(ξ) = |ξ|²/2` the operators are
//!
//! | operator            | multiplier              |
//! |---------------------|-------------------------|
//! | Bessel potential    | `(1 + λ)^{a/2}`         |
//! | heat semigroup P(t) | `exp(-t λ)`             |
//! | `∂_i`               | `i ξ_i` (Nyquist zeroed) |

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{lr_of_magnitude, Field, GridSpec, Spectrum};
use crate::params::ParamSet;
use crate::stats;
use crate::synth::{AmplitudeProfile, FieldSynth};

/// Smoothness order `s` and integrability exponent `r` of `H^s_r`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SobolevIndex {
    pub s: f64,
    pub r: f64,
}

impl SobolevIndex {
    pub fn new(s: f64, r: f64) -> Result<Self> {
        if !(r > 1.0) || !r.is_finite() || !s.is_finite() {
            return Err(Error::InvalidExponent(r));
        }
        Ok(Self { s, r })
    }
}

pub fn bessel_multiplier(grid: &GridSpec, order: f64) -> Vec<f64> {
    grid.xi_squared()
        .into_iter()
        .map(|x2| (1.0 + 0.5 * x2).powf(0.5 * order))
        .collect()
}

pub fn heat_multiplier(grid: &GridSpec, t: f64) -> Vec<f64> {
    grid.xi_squared().into_iter().map(|x2| (-0.5 * t * x2).exp()).collect()
}

/// Applies `(I - Δ/2)^{a/2}` to every channel.
pub fn bessel_potential(f: &Field, order: f64) -> Result<Field> {
    f.ensure_finite("bessel_potential input")?;
    let mut spec = Spectrum::from_field(f);
    spec.apply_real(&bessel_multiplier(f.grid(), order));
    Ok(spec.to_field())
}

/// `‖(I - Δ/2)^{s/2} f‖_{L^r}` with the pointwise Euclidean magnitude over channels.
pub fn sobolev_norm(f: &Field, idx: SobolevIndex) -> Result<f64> {
    if !(idx.r > 1.0) {
        return Err(Error::InvalidExponent(idx.r));
    }
    if idx.s == 0.0 {
        f.ensure_finite("sobolev_norm input")?;
        return Ok(f.lr_norm(idx.r));
    }
    Ok(bessel_potential(f, idx.s)?.lr_norm(idx.r))
}

/// Sobolev norm of an already transformed field.
pub(crate) fn sobolev_norm_of_spectrum(spec: &Spectrum, idx: SobolevIndex) -> f64 {
    let g = spec.with_real(&bessel_multiplier(spec.grid(), idx.s)).to_field();
    lr_of_magnitude(&g.magnitude(), idx.r, spec.grid().cell_volume())
}

/// `H^s_2` norm computed directly from Fourier coefficients (Plancherel).
pub fn plancherel_norm(f: &Field, s: f64) -> f64 {
    let spec = Spectrum::from_field(f);
    let mult = bessel_multiplier(f.grid(), 2.0 * s);
    let len = f.grid().len() as f64;
    let mut acc = 0.0;
    for c in 0..f.channels() {
        for (z, m) in spec.channel(c).iter().zip(&mult) {
            acc += z.norm_sqr() * m;
        }
    }
    // Σ|u_i|² dx^d = (1/N^d) Σ|û_k|² dx^d
    (acc / len * f.grid().cell_volume()).sqrt()
}

pub fn heat_semigroup(f: &Field, t: f64) -> Result<Field> {
    if !(t >= 0.0) {
        return Err(Error::NegativeTime(t));
    }
    f.ensure_finite("heat_semigroup input")?;
    if t == 0.0 {
        return Ok(f.clone());
    }
    let mut spec = Spectrum::from_field(f);
    spec.apply_real(&heat_multiplier(f.grid(), t));
    Ok(spec.to_field())
}

/// Gradient of every channel. Output channel `i * m + j` holds `∂_i f_j`
/// where `m` is the number of input channels.
pub fn gradient(f: &Field) -> Result<Field> {
    f.ensure_finite("gradient input")?;
    Ok(gradient_of_spectrum(&Spectrum::from_field(f)))
}

pub(crate) fn gradient_of_spectrum(spec: &Spectrum) -> Field {
    let grid = *spec.grid();
    let m = spec.channels();
    let d = grid.dim();
    let mut out = Spectrum::zeros(grid, d * m);
    for i in 0..d {
        let xi = grid.xi_component(i);
        for j in 0..m {
            let src = spec.channel(j);
            let dst = out.channel_mut(i * m + j);
            for (flat, (o, z)) in dst.iter_mut().zip(src).enumerate() {
                if grid.is_nyquist(flat, i) {
                    continue;
                }
                // multiply by i ξ
                *o = rustfft::num_complex::Complex64::new(-z.im * xi[flat], z.re * xi[flat]);
            }
        }
    }
    out.to_field()
}

/// Spectral Laplacian of every channel.
pub fn laplacian(f: &Field) -> Result<Field> {
    f.ensure_finite("laplacian input")?;
    let mut spec = Spectrum::from_field(f);
    let mult: Vec<f64> = f.grid().xi_squared().into_iter().map(|x| -x).collect();
    spec.apply_real(&mult);
    Ok(spec.to_field())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HolderFlavor {
    /// `‖h‖_∞ + [h]_α`
    ZeroPlus,
    /// `‖h‖_∞ + ‖∇h‖_∞ + [∇h]_α`
    OnePlus,
}

/// Largest Hölder quotient over node pairs at dyadic separations `2^m dx`
/// along each axis. Pairs do not wrap around the periodic box.
pub fn holder_seminorm(f: &Field, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidHolderExponent(alpha));
    }
    let grid = *f.grid();
    let n = grid.n();
    let len = grid.len();
    let ch = f.channels();
    let mut best: f64 = 0.0;
    let strides: Vec<usize> = match grid.dim() {
        1 => vec![1],
        _ => vec![n, 1],
    };
    let mut sep = 1usize;
    while sep < n {
        let denom = (sep as f64 * grid.dx()).powf(alpha);
        for &stride in &strides {
            for flat in 0..len {
                let along = (flat / stride) % n;
                if along + sep >= n {
                    continue;
                }
                let other = flat + sep * stride;
                let mut d2 = 0.0;
                for c in 0..ch {
                    let v = f.values()[c * len + flat] - f.values()[c * len + other];
                    d2 += v * v;
                }
                best = best.max(d2.sqrt() / denom);
            }
        }
        sep *= 2;
    }
    Ok(best)
}

pub fn holder_norm(f: &Field, flavor: HolderFlavor, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidHolderExponent(alpha));
    }
    f.ensure_finite("holder_norm input")?;
    match flavor {
        HolderFlavor::ZeroPlus => Ok(f.sup_norm() + holder_seminorm(f, alpha)?),
        HolderFlavor::OnePlus => {
            let g = gradient(f)?;
            Ok(f.sup_norm() + g.sup_norm() + holder_seminorm(&g, alpha)?)
        }
    }
}

/// Which bound a [`semigroup_bound_report`] probes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum SemigroupBound {
    /// `‖P(t)w‖_{H^{1+δ}_r} ≤ C e^t t^{-(1+δ+β)/2} ‖w‖_{H^{-β}_r}`
    Mapping { beta: f64, delta: f64 },
    /// `‖P(t)w‖_{H^s_r} ≤ ‖w‖_{H^s_r}` for `s ≥ 0`
    Contraction { s: f64 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SemigroupReport {
    pub bound: SemigroupBound,
    pub r: f64,
    pub n: usize,
    pub samples: usize,
    /// Largest normalized ratio over samples and times.
    pub constant: f64,
    /// Per time: largest normalized ratio over samples.
    pub ratio_by_time: Vec<(f64, f64)>,
    /// Mapping variant: least-squares slope of `log ‖P(t)w‖` against `log t`,
    /// averaged over samples.
    pub fitted_slope: Option<f64>,
    pub predicted_slope: Option<f64>,
}

/// Rough test fields used by the semigroup reports. The mapping variant uses
/// the borderline spectrum `(1+λ)^{-(d/2-β)/2}` for which `‖P(t)w‖_{H^{1+δ}}`
/// blows up at exactly the rate `t^{-(1+δ+β)/2}`.
pub fn semigroup_probe_synth(grid: &GridSpec, bound: SemigroupBound) -> FieldSynth {
    let d = grid.dim() as f64;
    match bound {
        SemigroupBound::Mapping { beta, .. } => FieldSynth {
            profile: AmplitudeProfile::Bessel { decay: 0.5 * d - beta },
            phase_only: true,
            max_mode: None,
            channels: 1,
        },
        SemigroupBound::Contraction { s } => FieldSynth {
            profile: AmplitudeProfile::Bessel { decay: s + 0.5 * d + 0.25 },
            phase_only: false,
            max_mode: None,
            channels: 1,
        },
    }
}

pub fn semigroup_bound_report(
    grid: &GridSpec,
    bound: SemigroupBound,
    r: f64,
    t_grid: &[f64],
    sample_count: usize,
    seed: u64,
) -> Result<SemigroupReport> {
    if t_grid.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::InvalidArgument("semigroup report times must be positive".into()));
    }
    let synth = semigroup_probe_synth(grid, bound);
    let mut by_time = vec![0.0_f64; t_grid.len()];
    let mut slopes = Vec::new();
    let log_t: Vec<f64> = t_grid.iter().map(|t| t.ln()).collect();
    for sample in 0..sample_count {
        let w = synth.sample(grid, seed, sample as u64);
        let spec = Spectrum::from_field(&w);
        let mut log_norm = Vec::with_capacity(t_grid.len());
        let (idx_in, idx_out, expo) = match bound {
            SemigroupBound::Mapping { beta, delta } => (
                SobolevIndex::new(-beta, r)?,
                SobolevIndex::new(1.0 + delta, r)?,
                -(1.0 + delta + beta) / 2.0,
            ),
            SemigroupBound::Contraction { s } => {
                (SobolevIndex::new(s, r)?, SobolevIndex::new(s, r)?, 0.0)
            }
        };
        let base = sobolev_norm_of_spectrum(&spec, idx_in);
        if base == 0.0 {
            continue;
        }
        for (k, &t) in t_grid.iter().enumerate() {
            let evolved = spec.with_real(&heat_multiplier(grid, t));
            let top = sobolev_norm_of_spectrum(&evolved, idx_out);
            log_norm.push(top.ln());
            let ratio = match bound {
                SemigroupBound::Mapping { .. } => top / (t.exp() * t.powf(expo) * base),
                SemigroupBound::Contraction { .. } => top / base,
            };
            by_time[k] = by_time[k].max(ratio);
        }
        if matches!(bound, SemigroupBound::Mapping { .. }) && t_grid.len() >= 2 {
            slopes.push(stats::linear_fit(&log_t, &log_norm).slope);
        }
    }
    let predicted_slope = match bound {
        SemigroupBound::Mapping { beta, delta } => Some(-(1.0 + delta + beta) / 2.0),
        SemigroupBound::Contraction { .. } => None,
    };
    Ok(SemigroupReport {
        bound,
        r,
        n: grid.n(),
        samples: sample_count,
        constant: by_time.iter().cloned().fold(0.0, f64::max),
        ratio_by_time: t_grid.iter().cloned().zip(by_time).collect(),
        fitted_slope: if slopes.is_empty() { None } else { Some(stats::mean(&slopes)) },
        predicted_slope,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MorreyReport {
    pub n: usize,
    pub alpha: f64,
    pub samples_used: usize,
    pub max_ratio: f64,
}

/// `‖h‖_{C^{1+α}} / ‖h‖_{H^{1+δ}_p}` with `α = δ - d/p`; `None` for a zero field.
pub fn morrey_ratio(h: &Field, param: &ParamSet) -> Result<Option<f64>> {
    let denom = sobolev_norm(h, SobolevIndex::new(1.0 + param.delta(), param.p())?)?;
    if denom == 0.0 {
        return Ok(None);
    }
    Ok(Some(holder_norm(h, HolderFlavor::OnePlus, param.alpha())? / denom))
}

/// Largest Morrey ratio over `samples` random fields in `H^{1+δ}_p`.
pub fn morrey_report(grid: &GridSpec, param: &ParamSet, samples: usize, seed: u64) -> Result<MorreyReport> {
    let d = grid.dim() as f64;
    let synth = FieldSynth {
        profile: AmplitudeProfile::Bessel { decay: 1.0 + param.delta() + 0.5 * d + 0.5 },
        phase_only: false,
        max_mode: None,
        channels: 1,
    };
    let mut max_ratio: f64 = 0.0;
    let mut used = 0;
    for k in 0..samples {
        let h = synth.sample(grid, seed, k as u64);
        if let Some(r) = morrey_ratio(&h, param)? {
            max_ratio = max_ratio.max(r);
            used += 1;
        }
    }
    Ok(MorreyReport { n: grid.n(), alpha: param.alpha(), samples_used: used, max_ratio })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn line(n: usize) -> GridSpec {
        GridSpec::line(n, 10.0).unwrap()
    }

    fn band_limited(grid: &GridSpec, seed: u64) -> Field {
        FieldSynth {
            profile: AmplitudeProfile::Bessel { decay: 0.0 },
            phase_only: false,
            max_mode: Some(grid.n() / 4),
            channels: 1,
        }
        .sample(grid, seed, 0)
    }

    #[test]
    fn constant_is_fixed_by_bessel_potential() {
        let g = line(64);
        let f = Field::constant(g, 1, 2.5);
        for a in [-1.0, 0.3, 2.0] {
            let out = bessel_potential(&f, a).unwrap();
            assert!(out.max_abs_diff(&f).unwrap() < 1e-12);
        }
    }

    #[test]
    fn cosine_mode_is_an_eigenfunction() {
        let g = line(128);
        let k = 5.0;
        let xi = PI * k / g.half_width();
        let f = Field::scalar_from_fn(g, |x| (xi * x[0]).cos());
        let out = bessel_potential(&f, 1.3).unwrap();
        let expect = f.scaled((1.0 + 0.5 * xi * xi).powf(0.65));
        assert!(out.max_abs_diff(&expect).unwrap() < 1e-12);

        let heat = heat_semigroup(&f, 0.2).unwrap();
        let expect = f.scaled((-0.1 * xi * xi).exp());
        assert!(heat.max_abs_diff(&expect).unwrap() < 1e-13);

        let norm = sobolev_norm(&f, SobolevIndex::new(0.7, 2.0).unwrap()).unwrap();
        let mode_l2 = g.half_width().sqrt();
        assert!((norm - (1.0 + 0.5 * xi * xi).powf(0.35) * mode_l2).abs() < 1e-10);
    }

    #[test]
    fn round_trip_and_semigroup_law() {
        let g = line(256);
        let f = band_limited(&g, 3);
        let back = bessel_potential(&bessel_potential(&f, 1.7).unwrap(), -1.7).unwrap();
        assert!(back.max_abs_diff(&f).unwrap() <= 1e-10 * f.sup_norm());
        let a = heat_semigroup(&heat_semigroup(&f, 0.1).unwrap(), 0.5).unwrap();
        let b = heat_semigroup(&f, 0.6).unwrap();
        assert!(a.max_abs_diff(&b).unwrap() <= 1e-10 * f.sup_norm());
    }

    #[test]
    fn plancherel_matches_quadrature() {
        let g = line(256);
        let f = band_limited(&g, 9);
        for s in [-0.5, 0.0, 1.0] {
            let a = sobolev_norm(&f, SobolevIndex::new(s, 2.0).unwrap()).unwrap();
            let b = plancherel_norm(&f, s);
            assert!((a - b).abs() <= 1e-10 * b);
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let g = line(16);
        let f = Field::zeros(g, 1);
        assert!(SobolevIndex::new(0.0, 1.0).is_err());
        assert!(sobolev_norm(&f, SobolevIndex { s: 0.0, r: 0.5 }).is_err());
        assert!(heat_semigroup(&f, -1.0).is_err());
        assert!(holder_norm(&f, HolderFlavor::ZeroPlus, 1.0).is_err());
        let mut bad = f.clone();
        bad.values_mut()[3] = f64::NAN;
        assert!(bessel_potential(&bad, 1.0).is_err());
    }

    #[test]
    fn sine_derivative_is_exact() {
        let g = line(64);
        let xi = PI * 3.0 / g.half_width();
        let f = Field::scalar_from_fn(g, |x| (xi * x[0]).sin());
        let df = gradient(&f).unwrap();
        let expect = Field::scalar_from_fn(g, |x| xi * (xi * x[0]).cos());
        assert!(df.max_abs_diff(&expect).unwrap() < 1e-12);
        let c = Field::constant(g, 1, 4.0);
        assert!(gradient(&c).unwrap().sup_norm() < 1e-12);
    }

    #[test]
    fn gradient_layout_in_two_dimensions() {
        let g = GridSpec::new(2, 32, 10.0).unwrap();
        let xi = PI * 2.0 / 10.0;
        let u = Field::from_fn(g, 2, |x, out| {
            out[0] = (xi * x[0]).sin();
            out[1] = (xi * x[1]).cos();
        });
        let du = gradient(&u).unwrap();
        assert_eq!(du.channels(), 4);
        // (i, j) = ∂_i u_j at channel i*2 + j
        let d0u0 = Field::scalar_from_fn(g, |x| xi * (xi * x[0]).cos());
        let d1u1 = Field::scalar_from_fn(g, |x| -xi * (xi * x[1]).sin());
        assert!(du.extract_channel(0).max_abs_diff(&d0u0).unwrap() < 1e-12);
        assert!(du.extract_channel(1).sup_norm() < 1e-12);
        assert!(du.extract_channel(2).sup_norm() < 1e-12);
        assert!(du.extract_channel(3).max_abs_diff(&d1u1).unwrap() < 1e-12);
    }

    #[test]
    fn holder_of_constant_and_zero() {
        let g = line(64);
        assert_eq!(holder_norm(&Field::zeros(g, 1), HolderFlavor::OnePlus, 0.3).unwrap(), 0.0);
        let c = Field::constant(g, 1, -2.0);
        assert!((holder_norm(&c, HolderFlavor::ZeroPlus, 0.5).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn holder_seminorm_of_linear_ramp() {
        // |x - y| / |x - y|^α is largest at the widest separation
        let g = line(16);
        let f = Field::scalar_from_fn(g, |x| x[0]);
        let q = holder_seminorm(&f, 0.5).unwrap();
        let widest = 8.0 * g.dx();
        assert!((q - widest.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn contraction_report_stays_below_one() {
        let g = line(256);
        let rep = semigroup_bound_report(&g, SemigroupBound::Contraction { s: 0.5 }, 2.5, &[0.05, 0.2, 1.0], 5, 1)
            .unwrap();
        assert!(rep.constant <= 1.0 + 1e-8, "{}", rep.constant);
    }
}
