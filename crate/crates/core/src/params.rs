//! The admissible parameter region, ρ-weighted time norms and Lipschitz drivers.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::mild::TimeField;
use crate::spectral::{sobolev_norm, SobolevIndex};

/// Strict inequalities must hold with at least this slack.
pub const STRICT_MARGIN: f64 = 1e-9;

/// Unvalidated parameter tuple, as read from a config file.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamCandidate {
    pub beta: f64,
    pub q: f64,
    pub delta: f64,
    pub p: f64,
    pub d: usize,
    pub gamma: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
}

impl ParamCandidate {
    pub fn new(beta: f64, q: f64, delta: f64, p: f64, d: usize) -> Self {
        // γ defaults to half its admissible range, T to 1
        let gamma = 0.25 * (1.0 - delta - beta);
        Self { beta, q, delta, p, d, gamma, horizon: 1.0 }
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn validate(&self) -> std::result::Result<ParamSet, ParamRejection> {
        validate_params(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectionCode {
    NonFinite,
    Dimension,
    BetaRange,
    QRange,
    DeltaRange,
    PRange,
    PBelowTwo,
    GammaRange,
    Horizon,
}

impl RejectionCode {
    pub fn as_str(&self) -> &'static str {
        match self {
            RejectionCode::NonFinite => "non_finite",
            RejectionCode::Dimension => "dimension",
            RejectionCode::BetaRange => "beta_range",
            RejectionCode::QRange => "q_range",
            RejectionCode::DeltaRange => "delta_range",
            RejectionCode::PRange => "p_range",
            RejectionCode::PBelowTwo => "p_below_two",
            RejectionCode::GammaRange => "gamma_range",
            RejectionCode::Horizon => "horizon",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Error, Serialize, Deserialize)]
#[error("{message}")]
pub struct ParamRejection {
    pub code: RejectionCode,
    pub message: String,
}

impl ParamRejection {
    fn new(code: RejectionCode, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

/// A parameter tuple inside the admissible region. Only obtainable through
/// [`validate_params`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ParamSet {
    beta: f64,
    q: f64,
    delta: f64,
    p: f64,
    d: usize,
    gamma: f64,
    alpha: f64,
    #[serde(rename = "T")]
    horizon: f64,
}

impl ParamSet {
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn q(&self) -> f64 {
        self.q
    }
    pub fn delta(&self) -> f64 {
        self.delta
    }
    pub fn p(&self) -> f64 {
        self.p
    }
    pub fn d(&self) -> usize {
        self.d
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    /// Hölder exponent `δ - d/p` of the embedding `H^{1+δ}_p ⊂ C^{1+α}`.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn candidate(&self) -> ParamCandidate {
        ParamCandidate {
            beta: self.beta,
            q: self.q,
            delta: self.delta,
            p: self.p,
            d: self.d,
            gamma: self.gamma,
            horizon: self.horizon,
        }
    }

    /// Same region point with a different horizon.
    pub fn with_horizon(&self, horizon: f64) -> std::result::Result<ParamSet, ParamRejection> {
        self.candidate().with_horizon(horizon).validate()
    }

    /// `H^{1+δ}_p`, the space the solution lives in.
    pub fn solution_index(&self) -> SobolevIndex {
        SobolevIndex { s: 1.0 + self.delta, r: self.p }
    }

    /// `H^{-β}_q`, the space of the drift.
    pub fn drift_index(&self) -> SobolevIndex {
        SobolevIndex { s: -self.beta, r: self.q }
    }

    /// `H^{-β}_p`, where the products `∇u* b` live.
    pub fn product_index(&self) -> SobolevIndex {
        SobolevIndex { s: -self.beta, r: self.p }
    }

    /// `H^{1+δ+2γ}_p`, the declared class of the terminal condition.
    pub fn terminal_index(&self) -> SobolevIndex {
        SobolevIndex { s: 1.0 + self.delta + 2.0 * self.gamma, r: self.p }
    }

    /// `ρ^{(δ-1)/2} + ρ^{(δ+β-1)/2}`
    pub fn contraction_shape(&self, rho: f64) -> f64 {
        rho.powf(0.5 * (self.delta - 1.0)) + rho.powf(0.5 * (self.delta + self.beta - 1.0))
    }
}

fn strictly_between(x: f64, lo: f64, hi: f64) -> bool {
    x - lo > STRICT_MARGIN && hi - x > STRICT_MARGIN
}

fn fmt(x: f64) -> String {
    let s = format!("{x:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

/// Accepts the tuple iff every inequality of the admissible region holds
/// strictly; otherwise names the first violated one.
pub fn validate_params(c: &ParamCandidate) -> std::result::Result<ParamSet, ParamRejection> {
    use RejectionCode::*;
    let reals = [c.beta, c.q, c.delta, c.p, c.gamma, c.horizon];
    if reals.iter().any(|v| !v.is_finite()) {
        return Err(ParamRejection::new(NonFinite, "parameters must be finite"));
    }
    if c.d == 0 {
        return Err(ParamRejection::new(Dimension, "d must be at least 1"));
    }
    let d = c.d as f64;
    if !strictly_between(c.beta, 0.0, 0.5) {
        return Err(ParamRejection::new(BetaRange, "β ∉ (0, 1/2)"));
    }
    let (q_lo, q_hi) = if c.d == 1 { (2.0, 1.0 / c.beta) } else { (d / (1.0 - c.beta), d / c.beta) };
    if !strictly_between(c.q, q_lo, q_hi) {
        return Err(ParamRejection::new(
            QRange,
            format!("q ∉ ({}, {})", fmt(q_lo), fmt(q_hi)),
        ));
    }
    if !strictly_between(c.delta, c.beta, 1.0 - c.beta) {
        return Err(ParamRejection::new(
            DeltaRange,
            format!("δ ∉ (β, 1 - β) = ({}, {})", fmt(c.beta), fmt(1.0 - c.beta)),
        ));
    }
    if !strictly_between(c.p, d / c.delta, c.q) {
        return Err(ParamRejection::new(
            PRange,
            format!("p ∉ (d/δ, q) = ({}, {})", fmt(d / c.delta), fmt(c.q)),
        ));
    }
    if c.d == 1 && c.p < 2.0 {
        return Err(ParamRejection::new(PBelowTwo, "p < 2 with d = 1"));
    }
    let g_hi = 0.5 * (1.0 - c.delta - c.beta);
    if !strictly_between(c.gamma, 0.0, g_hi) {
        return Err(ParamRejection::new(
            GammaRange,
            format!("γ ∉ (0, (1 - δ - β)/2) = (0, {})", fmt(g_hi)),
        ));
    }
    if !(c.horizon > 0.0) {
        return Err(ParamRejection::new(Horizon, "T must be positive"));
    }
    Ok(ParamSet {
        beta: c.beta,
        q: c.q,
        delta: c.delta,
        p: c.p,
        d: c.d,
        gamma: c.gamma,
        alpha: c.delta - d / c.p,
        horizon: c.horizon,
    })
}

/// `max_k e^{-ρ t_k} ‖u(t_k)‖_{H^s_r}`. `ρ = 0` gives the plain sup in time.
pub fn rho_norm(u: &TimeField, rho: f64, idx: SobolevIndex) -> Result<f64> {
    if !(rho == 0.0 || rho >= 1.0) {
        return Err(Error::InvalidArgument(format!("ρ must be 0 or at least 1, got {rho}")));
    }
    let mut best: f64 = 0.0;
    for (k, snap) in u.snapshots().iter().enumerate() {
        let t = u.time().node(k);
        best = best.max((-rho * t).exp() * sobolev_norm(snap, idx)?);
    }
    Ok(best)
}

pub const RHO_CEILING: f64 = 1e9;

/// Smallest `ρ ∈ {1, 2, 4, …}` with `c (ρ^{(δ-1)/2} + ρ^{(δ+β-1)/2}) ≤ 1/2`.
pub fn contraction_rho(param: &ParamSet, c_emp: f64) -> Result<f64> {
    if !(c_emp > 0.0) || !c_emp.is_finite() {
        return Err(Error::InvalidArgument(format!("empirical constant must be positive, got {c_emp}")));
    }
    let mut rho = 1.0;
    while rho <= RHO_CEILING {
        if c_emp * param.contraction_shape(rho) <= 0.5 {
            return Ok(rho);
        }
        rho *= 2.0;
    }
    Err(Error::NoContractionWeight { c: c_emp })
}

/// A nonlinearity `f(t, x, y, z)`, Lipschitz in `(y, z)`.
///
/// `y` has `m` components and `z` holds the gradient with `z[i * m + j] = ∂_i u_j`.
pub trait LipschitzDriver: Send + Sync {
    fn eval(&self, t: f64, x: &[f64], y: &[f64], z: &[f64], out: &mut [f64]);
    fn lipschitz(&self) -> f64;
    fn bound_at_zero(&self) -> f64;
    /// True when `f` vanishes identically.
    fn is_zero(&self) -> bool {
        false
    }
}

/// The named nonlinearities selectable from a config file.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BuiltinDriver {
    Zero,
    /// `f = -k y`
    LinearInY { k: f64 },
    /// `f_j = (L/√d) tanh(Σ_i z_ij)`
    SaturatingInZ { lipschitz: f64 },
}

impl LipschitzDriver for BuiltinDriver {
    fn eval(&self, _t: f64, x: &[f64], y: &[f64], z: &[f64], out: &mut [f64]) {
        match *self {
            BuiltinDriver::Zero => out.iter_mut().for_each(|o| *o = 0.0),
            BuiltinDriver::LinearInY { k } => {
                for (o, v) in out.iter_mut().zip(y) {
                    *o = -k * v;
                }
            }
            BuiltinDriver::SaturatingInZ { lipschitz } => {
                let d = x.len();
                let m = y.len();
                let scale = lipschitz / (d as f64).sqrt();
                for (j, o) in out.iter_mut().enumerate() {
                    let s: f64 = (0..d).map(|i| z[i * m + j]).sum();
                    *o = scale * s.tanh();
                }
            }
        }
    }

    fn lipschitz(&self) -> f64 {
        match *self {
            BuiltinDriver::Zero => 0.0,
            BuiltinDriver::LinearInY { k } => k.abs(),
            BuiltinDriver::SaturatingInZ { lipschitz } => lipschitz.abs(),
        }
    }

    fn bound_at_zero(&self) -> f64 {
        0.0
    }

    fn is_zero(&self) -> bool {
        match *self {
            BuiltinDriver::Zero => true,
            BuiltinDriver::LinearInY { k } => k == 0.0,
            BuiltinDriver::SaturatingInZ { lipschitz } => lipschitz == 0.0,
        }
    }
}
