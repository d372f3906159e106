//! Haar wavelets on the line, truncation and mollifier projectors, and the
//! density checks that justify extending operators from smooth inputs.
//!
//! Basis: `h_{j,m}(x) = h_M(2^j x - m)` for `j ≥ 0` and
//! `h_{-1,m}(x) = √2 h_F(x - m)`, with coefficients `μ̄_{j,m} = 2^j ∫ h h_{j,m}`.
//! Under this normalisation `P_N h = Σ μ̄_{j,m} h_{j,m}` over `-1 ≤ j ≤ N`,
//! `|m| ≤ N`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, GridSpec, Spectrum};
use crate::mild::TimeField;
use crate::spectral::{sobolev_norm, SobolevIndex};
use crate::synth::{AmplitudeProfile, FieldSynth};

fn mother(y: f64) -> f64 {
    if (0.0..0.5).contains(&y) {
        1.0
    } else if (0.5..1.0).contains(&y) {
        -1.0
    } else {
        0.0
    }
}

fn father(y: f64) -> f64 {
    if (0.0..1.0).contains(&y) { 1.0 } else { 0.0 }
}

/// `h_{j,m}(x)`.
pub fn haar_value(j: i32, m: i64, x: f64) -> f64 {
    if j < 0 {
        std::f64::consts::SQRT_2 * father(x - m as f64)
    } else {
        mother((2.0f64).powi(j) * x - m as f64)
    }
}

/// Support `[a, b)` of `h_{j,m}`.
pub fn haar_support(j: i32, m: i64) -> (f64, f64) {
    let w = (2.0f64).powi(-j.max(0));
    (m as f64 * w, (m + 1) as f64 * w)
}

/// A level is resolved when each half of its wavelets spans at least one cell.
/// Unresolved levels carry zero coefficients.
pub fn level_resolved(grid: &GridSpec, j: i32) -> bool {
    j < 0 || (2.0f64).powi(j + 1) * grid.dx() <= 1.0 + 1e-12
}

fn require_line(grid: &GridSpec) -> Result<()> {
    if grid.dim() != 1 {
        return Err(Error::Haar(format!("the Haar route needs d = 1, got d = {}", grid.dim())));
    }
    Ok(())
}

fn node_range(grid: &GridSpec, a: f64, b: f64) -> std::ops::Range<usize> {
    let l = grid.half_width();
    let dx = grid.dx();
    let lo = (((a + l) / dx).floor() as i64 - 1).clamp(0, grid.n() as i64) as usize;
    let hi = (((b + l) / dx).ceil() as i64 + 1).clamp(0, grid.n() as i64) as usize;
    lo..hi
}

/// Grid samples of `h_{j,m}`.
pub fn haar_function(grid: &GridSpec, j: i32, m: i64) -> Result<Field> {
    require_line(grid)?;
    if j < -1 {
        return Err(Error::Haar(format!("level {j} below -1")));
    }
    Ok(Field::scalar_from_fn(*grid, |x| haar_value(j, m, x[0])))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HaarExpansion {
    level: u32,
    grid: GridSpec,
    channels: usize,
    /// Channel-major, then `j = -1..=N`, then `m = -N..=N`.
    coefficients: Vec<f64>,
}

impl HaarExpansion {
    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    fn width(&self) -> usize {
        2 * self.level as usize + 1
    }

    fn per_channel(&self) -> usize {
        (self.level as usize + 2) * self.width()
    }

    fn slot(&self, c: usize, j: i32, m: i64) -> Option<usize> {
        let n = self.level as i64;
        if j < -1 || j as i64 > n || m.abs() > n || c >= self.channels {
            return None;
        }
        Some(c * self.per_channel() + (j + 1) as usize * self.width() + (m + n) as usize)
    }

    /// `μ̄_{j,m}` of channel `c`, zero outside the window.
    pub fn get(&self, c: usize, j: i32, m: i64) -> f64 {
        self.slot(c, j, m).map_or(0.0, |s| self.coefficients[s])
    }

    /// `(channel, j, m, μ̄)` in storage order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, i32, i64, f64)> + '_ {
        let n = self.level as i64;
        (0..self.channels).flat_map(move |c| {
            (-1..=n as i32).flat_map(move |j| (-n..=n).map(move |m| (c, j, m, self.get(c, j, m))))
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("channel,j,m,value\n");
        for (c, j, m, v) in self.iter() {
            out.push_str(&format!("{c},{j},{m},{v:e}\n"));
        }
        out
    }

    /// `Σ μ̄_{j,m} h_{j,m}` sampled on the grid.
    pub fn reconstruct(&self) -> Field {
        let mut out = Field::zeros(self.grid, self.channels);
        let grid = self.grid;
        for (c, j, m, v) in self.iter() {
            if v == 0.0 {
                continue;
            }
            let (a, b) = haar_support(j, m);
            let ch = out.channel_mut(c);
            for i in node_range(&grid, a, b) {
                ch[i] += v * haar_value(j, m, grid.coord(i));
            }
        }
        out
    }
}

/// `μ̄_{j,m} = 2^j ⟨h, h_{j,m}⟩` with the grid inner product as pairing.
pub fn haar_coefficients(h: &Field, level: u32) -> Result<HaarExpansion> {
    let grid = *h.grid();
    require_line(&grid)?;
    h.ensure_finite("Haar input")?;
    let n = level as i64;
    let dx = grid.dx();
    let mut exp = HaarExpansion {
        level,
        grid,
        channels: h.channels(),
        coefficients: vec![0.0; h.channels() * (level as usize + 2) * (2 * level as usize + 1)],
    };
    for c in 0..h.channels() {
        let vals = h.channel(c);
        for j in -1..=level as i32 {
            if !level_resolved(&grid, j) {
                continue;
            }
            let scale = (2.0f64).powi(j);
            for m in -n..=n {
                let (a, b) = haar_support(j, m);
                let pairing: f64 = node_range(&grid, a, b)
                    .map(|i| vals[i] * haar_value(j, m, grid.coord(i)))
                    .sum::<f64>()
                    * dx;
                let slot = exp.slot(c, j, m).expect("window index");
                exp.coefficients[slot] = scale * pairing;
            }
        }
    }
    Ok(exp)
}

/// `P_N h`.
pub fn haar_project(h: &Field, level: u32) -> Result<Field> {
    Ok(haar_coefficients(h, level)?.reconstruct())
}

/// Largest entry of `|G - I|` for the normalised grid Gram matrix
/// `G = 2^{(j+j')/2} ⟨h_{j,m}, h_{j',m'}⟩` over the resolved window.
pub fn gram_defect(grid: &GridSpec, level: u32) -> Result<f64> {
    require_line(grid)?;
    let n = level as i64;
    let mut basis = Vec::new();
    for j in -1..=level as i32 {
        if !level_resolved(grid, j) {
            continue;
        }
        for m in -n..=n {
            let f = haar_function(grid, j, m)?;
            basis.push(((2.0f64).powi(j).sqrt(), haar_support(j, m), f));
        }
    }
    let dx = grid.dx();
    let mut worst = 0.0f64;
    for (p, (sa, (a0, a1), fa)) in basis.iter().enumerate() {
        for (sb, (b0, b1), fb) in &basis[p..] {
            let lo = a0.max(*b0);
            let hi = a1.min(*b1);
            let ip = if lo >= hi {
                0.0
            } else {
                node_range(grid, lo, hi).map(|i| fa.values()[i] * fb.values()[i]).sum::<f64>() * dx
            };
            let target = if std::ptr::eq(fa, fb) { 1.0 } else { 0.0 };
            worst = worst.max((sa * sb * ip - target).abs());
        }
    }
    Ok(worst)
}

/// Fourier multiplier of the Gaussian mollifier of width `1 / level`.
pub fn mollifier_multiplier(grid: &GridSpec, level: u32) -> Vec<f64> {
    let n2 = (level as f64).powi(2);
    grid.xi_squared().iter().map(|x| (-x / (2.0 * n2)).exp()).collect()
}

/// `h * φ_N` computed spectrally.
pub fn mollify_project(h: &Field, level: u32) -> Result<Field> {
    if level == 0 {
        return Err(Error::InvalidArgument("mollifier level must be positive".into()));
    }
    h.ensure_finite("mollifier input")?;
    Ok(Spectrum::from_field(h).with_real(&mollifier_multiplier(h.grid(), level)).to_field())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApproxRoute {
    Haar,
    Mollifier,
}

impl ApproxRoute {
    pub fn project(&self, h: &Field, level: u32) -> Result<Field> {
        match self {
            ApproxRoute::Haar => haar_project(h, level),
            ApproxRoute::Mollifier => mollify_project(h, level),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DensityReport {
    pub route: ApproxRoute,
    pub level: u32,
    pub s: f64,
    pub r: f64,
    /// `‖l(t_k) - l_N(t_k)‖` per time node.
    pub errors: Vec<f64>,
    pub sup_error: f64,
}

/// Snapshot-wise projection of `l` and its uniform-in-time error.
pub fn density_approximant(
    l: &TimeField,
    route: ApproxRoute,
    level: u32,
    idx: SobolevIndex,
) -> Result<(TimeField, DensityReport)> {
    let approx = l.map(|f| route.project(f, level))?;
    let errors = l
        .snapshots()
        .iter()
        .zip(approx.snapshots())
        .map(|(a, b)| sobolev_norm(&a.sub(b)?, idx))
        .collect::<Result<Vec<_>>>()?;
    let sup_error = errors.iter().cloned().fold(0.0, f64::max);
    Ok((approx, DensityReport { route, level, s: idx.s, r: idx.r, errors, sup_error }))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundednessReport {
    pub route: ApproxRoute,
    pub s: f64,
    pub r: f64,
    pub samples: usize,
    /// `(N, max_h ‖P_N h‖ / ‖h‖)`
    pub ratios: Vec<(u32, f64)>,
    pub max_ratio: f64,
    /// Largest over smallest per-level ratio.
    pub spread: f64,
}

/// Empirical operator norm of `P_N` on random rough fields for each level.
/// The fields are localised by a Gaussian envelope around `x = 1/2` so that
/// every window with `N ≥ 1` contains their bulk; only the projector's action,
/// not the window growth, is then measured.
pub fn projector_bound_report(
    grid: &GridSpec,
    route: ApproxRoute,
    levels: &[u32],
    idx: SobolevIndex,
    samples: usize,
    seed: u64,
) -> Result<BoundednessReport> {
    let synth = FieldSynth::rough(AmplitudeProfile::Bessel { decay: 0.5 });
    let envelope = Field::scalar_from_fn(*grid, |x| x.iter().map(|v| (-(v - 0.5).powi(2) / 0.125).exp()).product());
    let fields = (0..samples as u64)
        .map(|k| synth.sample(grid, seed, k).mul_samples(&envelope))
        .collect::<Result<Vec<Field>>>()?;
    let norms = fields.iter().map(|f| sobolev_norm(f, idx)).collect::<Result<Vec<_>>>()?;
    let mut ratios = Vec::with_capacity(levels.len());
    for &level in levels {
        let mut worst = 0.0f64;
        for (f, n) in fields.iter().zip(&norms) {
            if *n > 0.0 {
                worst = worst.max(sobolev_norm(&route.project(f, level)?, idx)? / n);
            }
        }
        ratios.push((level, worst));
    }
    let max_ratio = ratios.iter().map(|r| r.1).fold(0.0, f64::max);
    let min_ratio = ratios.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    Ok(BoundednessReport {
        route,
        s: idx.s,
        r: idx.r,
        samples,
        ratios,
        max_ratio,
        spread: if min_ratio > 0.0 { max_ratio / min_ratio } else { f64::INFINITY },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dyadic() -> GridSpec {
        GridSpec::line(1 << 12, 16.0).unwrap()
    }

    #[test]
    fn mother_wavelet_values() {
        assert_eq!(haar_value(0, 0, 0.25), 1.0);
        assert_eq!(haar_value(0, 0, 0.75), -1.0);
        assert_eq!(haar_value(0, 0, 1.0), 0.0);
        assert_eq!(haar_value(0, 0, -0.1), 0.0);
        assert_eq!(haar_value(-1, 2, 2.5), std::f64::consts::SQRT_2);
        assert_eq!(haar_value(2, 1, 0.25 + 0.1), 1.0);
    }

    #[test]
    fn basis_element_is_reproduced() {
        let g = dyadic();
        let h = haar_function(&g, 2, -1).unwrap();
        let e = haar_coefficients(&h, 3).unwrap();
        for (_, j, m, v) in e.iter() {
            let want = if (j, m) == (2, -1) { 1.0 } else { 0.0 };
            assert!((v - want).abs() < 1e-10, "{j} {m} {v}");
        }
        assert!(e.reconstruct().max_abs_diff(&h).unwrap() < 1e-12);
    }

    #[test]
    fn unresolved_levels_are_dropped() {
        let g = GridSpec::line(64, 16.0).unwrap();
        assert!(level_resolved(&g, 0));
        assert!(!level_resolved(&g, 1));
        let e = haar_coefficients(&haar_function(&g, 0, 0).unwrap(), 3).unwrap();
        assert!(e.iter().filter(|t| t.1 > 0).all(|t| t.3 == 0.0));
    }

    #[test]
    fn rejects_planar_grids() {
        let g = GridSpec::new(2, 16, 4.0).unwrap();
        assert!(haar_function(&g, 0, 0).is_err());
        assert!(haar_project(&Field::zeros(g, 1), 2).is_err());
    }

    #[test]
    fn mollifier_fixes_constants() {
        let g = GridSpec::new(2, 32, 5.0).unwrap();
        let c = Field::constant(g, 1, 2.5);
        assert!(mollify_project(&c, 4).unwrap().max_abs_diff(&c).unwrap() < 1e-13);
    }
}
