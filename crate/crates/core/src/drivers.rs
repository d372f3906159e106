//! Drift generators and their admissibility certificate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, GridSpec, Spectrum};
use crate::mild::{TimeField, TimeGrid};
use crate::spectral::{gradient, sobolev_norm, SobolevIndex};
use crate::synth::{AmplitudeProfile, FieldSynth};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriverKind {
    Zero,
    /// `b_i = cos(ξ_k x_i)` with `ξ_k = π k / L`.
    SingleMode { mode: i64 },
    /// `b_i = exp(-|x - c|² / (2 w²))` with `c` on the diagonal.
    SmoothBump { center: f64, width: f64 },
    /// Spatial derivative of a tapered random field with Hölder exponent `hurst`.
    FbmDerivative { hurst: f64 },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Modulation {
    #[default]
    Constant,
    /// `1 + depth · sin(2π frequency t)`
    Sinusoidal { depth: f64, frequency: f64 },
}

impl Modulation {
    pub fn factor(&self, t: f64) -> f64 {
        match *self {
            Modulation::Constant => 1.0,
            Modulation::Sinusoidal { depth, frequency } => {
                1.0 + depth * (std::f64::consts::TAU * frequency * t).sin()
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoughDriverSpec {
    pub kind: DriverKind,
    pub amplitude: f64,
    #[serde(default)]
    pub modulation: Modulation,
    #[serde(default)]
    pub seed: u64,
}

/// Smooth cutoff equal to 1 on `|x| ≤ L - 3` and vanishing for `|x| ≥ L - 1`.
pub fn box_taper(grid: &GridSpec) -> Field {
    let l = grid.half_width();
    let inner = (l - 3.0).max(0.5 * l);
    let outer = (l - 1.0).max(inner + 0.1 * l);
    let step = |r: f64| -> f64 {
        let g = |x: f64| if x > 0.0 { (-1.0 / x).exp() } else { 0.0 };
        let s = ((outer - r.abs()) / (outer - inner)).clamp(0.0, 1.0);
        let a = g(s);
        let b = g(1.0 - s);
        if a + b == 0.0 { 0.0 } else { a / (a + b) }
    };
    Field::scalar_from_fn(*grid, |x| x.iter().map(|&v| step(v)).product())
}

/// Spatial profile of the drift before amplitude and time modulation.
fn profile(spec: &RoughDriverSpec, grid: &GridSpec, beta: f64) -> Result<Field> {
    let d = grid.dim();
    match spec.kind {
        DriverKind::Zero => Ok(Field::zeros(*grid, d)),
        DriverKind::SingleMode { mode } => {
            if mode.unsigned_abs() as usize >= grid.n() / 2 {
                return Err(Error::InvalidArgument(format!("mode {mode} is not resolved on N = {}", grid.n())));
            }
            let xi = grid.frequency_step() * mode as f64;
            Ok(Field::from_fn(*grid, d, |x, out| {
                for (o, v) in out.iter_mut().zip(x) {
                    *o = (xi * v).cos();
                }
            }))
        }
        DriverKind::SmoothBump { center, width } => {
            if !(width > 0.0) {
                return Err(Error::InvalidArgument("bump width must be positive".into()));
            }
            Ok(Field::from_fn(*grid, d, |x, out| {
                let r2: f64 = x.iter().map(|v| (v - center).powi(2)).sum();
                out.iter_mut().for_each(|o| *o = (-r2 / (2.0 * width * width)).exp());
            }))
        }
        DriverKind::FbmDerivative { hurst } => {
            if !(hurst > 0.5 && hurst < 1.0) {
                return Err(Error::InvalidArgument(format!("Hölder exponent {hurst} outside (1/2, 1)")));
            }
            if !(beta > 1.0 - hurst) {
                return Err(Error::InvalidArgument(format!(
                    "β = {beta} must exceed 1 - H = {} for the derivative to lie in H^-β",
                    1.0 - hurst
                )));
            }
            let synth = FieldSynth {
                profile: AmplitudeProfile::Power { exponent: hurst + 0.5 * d as f64 },
                phase_only: true,
                max_mode: None,
                channels: 1,
            };
            let path = synth.sample(grid, spec.seed, 0).mul_samples(&box_taper(grid))?;
            gradient(&path)
        }
    }
}

/// Builds `b(t, x) = amplitude · modulation(t) · profile(x)`.
pub fn make_driver(spec: &RoughDriverSpec, grid: &GridSpec, time: &TimeGrid, beta: f64) -> Result<TimeField> {
    if !spec.amplitude.is_finite() {
        return Err(Error::InvalidArgument("amplitude must be finite".into()));
    }
    let shape = profile(spec, grid, beta)?;
    TimeField::from_fn(*time, |t| shape.scaled(spec.amplitude * spec.modulation.factor(t)))
}

/// Relative change above which the refinement check fails.
pub const REFINEMENT_THRESHOLD: f64 = 0.1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DriverCertificate {
    pub beta: f64,
    pub q: f64,
    /// `sup_t ‖b(t)‖_{H^{-β}_q}`
    pub sup_norm: f64,
    /// `max_k ‖b(t_{k+1}) - b(t_k)‖_{H^{-β}_q}`
    pub continuity_modulus: f64,
    /// Relative change of the norm of the largest snapshot when its modes with
    /// `|k| ≥ N/4` are removed.
    pub refinement_change: f64,
    pub admissible: bool,
    pub notes: Vec<String>,
}

fn half_band(f: &Field) -> Field {
    let grid = f.grid();
    let cap = (grid.n() / 4) as i64;
    let mask: Vec<f64> = (0..grid.len())
        .map(|flat| {
            let idx = grid.unflatten(flat);
            let ok = (0..grid.dim()).all(|a| grid.mode(idx[a]).abs() < cap);
            if ok { 1.0 } else { 0.0 }
        })
        .collect();
    Spectrum::from_field(f).with_real(&mask).to_field()
}

/// Norms, time continuity and resolution stability of a drift.
pub fn certify_driver(b: &TimeField, beta: f64, q: f64) -> Result<DriverCertificate> {
    let idx = SobolevIndex::new(-beta, q)?;
    let mut notes = Vec::new();
    if !b.is_finite() {
        return Ok(DriverCertificate {
            beta,
            q,
            sup_norm: f64::NAN,
            continuity_modulus: f64::NAN,
            refinement_change: f64::NAN,
            admissible: false,
            notes: vec!["non-finite samples".into()],
        });
    }
    let norms = b
        .snapshots()
        .iter()
        .map(|s| sobolev_norm(s, idx))
        .collect::<Result<Vec<_>>>()?;
    let (k_max, sup_norm) = norms
        .iter()
        .cloned()
        .enumerate()
        .fold((0, 0.0_f64), |acc, (k, v)| if v > acc.1 { (k, v) } else { acc });
    let continuity_modulus = b.continuity_modulus(idx)?;
    let refinement_change = if sup_norm == 0.0 {
        0.0
    } else {
        let coarse = sobolev_norm(&half_band(b.snapshot(k_max)), idx)?;
        (sup_norm - coarse).abs() / sup_norm
    };
    let admissible = refinement_change <= REFINEMENT_THRESHOLD && sup_norm.is_finite();
    if !admissible {
        notes.push(format!(
            "H^{{-{beta}}}_{q} norm moves by {:.1}% when the upper half band is removed",
            100.0 * refinement_change
        ));
    }
    notes.push("growth at infinity is moot: fields are tapered inside the periodic box".into());
    Ok(DriverCertificate { beta, q, sup_norm, continuity_modulus, refinement_change, admissible, notes })
}

/// A drift that passed [`certify_driver`]. The PDE and BSDE solvers only
/// accept drifts in this form.
#[derive(Clone, Debug)]
pub struct CertifiedDriver {
    field: TimeField,
    certificate: DriverCertificate,
}

impl CertifiedDriver {
    pub fn certify(b: TimeField, beta: f64, q: f64) -> Result<Self> {
        let certificate = certify_driver(&b, beta, q)?;
        if !certificate.admissible {
            return Err(Error::UncertifiedDriver(certificate.notes.join("; ")));
        }
        Ok(Self { field: b, certificate })
    }

    pub fn field(&self) -> &TimeField {
        &self.field
    }

    pub fn certificate(&self) -> &DriverCertificate {
        &self.certificate
    }
}
