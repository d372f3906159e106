use proptest::prelude::*;

use roughbsde::grid::{Field, GridSpec};
use roughbsde::mild::{TimeField, TimeGrid};
use roughbsde::params::{contraction_rho, rho_norm, ParamCandidate, ParamSet, RejectionCode};
use roughbsde::spectral::SobolevIndex;
use roughbsde::synth::{AmplitudeProfile, FieldSynth};

fn lerp(lo: f64, hi: f64, u: f64) -> f64 {
    lo + (hi - lo) * u
}

/// Samples the region coordinate by coordinate, each inside the interval
/// left open by the ones already drawn. Returns `None` when that interval is
/// empty.
fn interior(d: usize, u: [f64; 4]) -> Option<ParamCandidate> {
    let df = d as f64;
    let beta = lerp(0.0, 0.5, u[0]);
    let delta = lerp(beta, 1.0 - beta, u[1]);
    let floor2 = if d == 1 { 2.0 } else { 0.0 };
    let (q_lo, q_hi) = if d == 1 { (2.0, 1.0 / beta) } else { (df / (1.0 - beta), df / beta) };
    let q_min = q_lo.max(df / delta).max(floor2);
    if q_hi - q_min < 1e-3 {
        return None;
    }
    let q = lerp(q_min, q_hi, u[2]);
    let p_min = (df / delta).max(floor2);
    if q - p_min < 1e-3 {
        return None;
    }
    let p = lerp(p_min, q, u[3]);
    Some(ParamCandidate::new(beta, q, delta, p, d))
}

fn unit() -> impl Strategy<Value = f64> {
    0.02f64..0.98
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn interior_points_are_accepted(d in 1usize..4, a in unit(), b in unit(), c in unit(), e in unit()) {
        let Some(cand) = interior(d, [a, b, c, e]) else { return Ok(()) };
        prop_assert!(cand.validate().is_ok(), "{cand:?}: {:?}", cand.validate().err());
    }

    #[test]
    fn leaving_the_region_on_any_axis_is_rejected(
        d in 1usize..4, a in unit(), b in unit(), c in unit(), e in unit(), axis in 0usize..4, out in 0.0f64..1.0,
    ) {
        let Some(mut cand) = interior(d, [a, b, c, e]) else { return Ok(()) };
        match axis {
            0 => cand.beta = 0.5 + out,
            1 => cand.delta = 1.0 - cand.beta + out,
            2 => cand.p = cand.q + out,
            _ => cand.gamma = 0.5 * (1.0 - cand.delta - cand.beta) + out,
        }
        prop_assert!(cand.validate().is_err(), "{cand:?} accepted");
    }

    #[test]
    fn weighted_norm_decreases_in_rho(seed in 0u64..500, r1 in 1.0f64..50.0, dr in 0.0f64..50.0) {
        let param = reference();
        let u = time_field(seed);
        let idx = param.solution_index();
        let plain = rho_norm(&u, 0.0, idx).unwrap();
        let lo = rho_norm(&u, r1 + dr, idx).unwrap();
        let hi = rho_norm(&u, r1, idx).unwrap();
        prop_assert!(lo <= hi && hi <= plain);
        prop_assert!(lo >= (-(r1 + dr) * param.horizon()).exp() * plain * (1.0 - 1e-12));
    }

    #[test]
    fn contraction_weight_is_the_smallest_dyadic_fit(c in 1e-3f64..1.0, factor in 1.0f64..3.0) {
        // the slower decay rate here is ρ^{-0.1}, so constants above about 3.8
        // have no weight below the ceiling
        let param = reference();
        let rho = contraction_rho(&param, c).unwrap();
        prop_assert!(c * param.contraction_shape(rho) <= 0.5);
        prop_assert!(rho == 1.0 || c * param.contraction_shape(rho / 2.0) > 0.5);
        prop_assert!(contraction_rho(&param, c * factor).unwrap() >= rho);
    }
}

fn reference() -> ParamSet {
    ParamCandidate::new(0.3, 3.0, 0.5, 2.5, 1).validate().unwrap()
}

fn time_field(seed: u64) -> TimeField {
    let grid = GridSpec::line(64, 6.0).unwrap();
    let base = FieldSynth::rough(AmplitudeProfile::Bessel { decay: 1.5 }).sample(&grid, seed, 0);
    TimeField::from_fn(TimeGrid::new(1.0, 16).unwrap(), |t| base.scaled(1.0 + (3.0 * t).sin())).unwrap()
}

#[test]
fn reference_candidates() {
    assert!(ParamCandidate::new(0.3, 3.0, 0.5, 2.5, 1).validate().is_ok());
    assert_eq!(ParamCandidate::new(0.6, 3.0, 0.5, 2.5, 1).validate().unwrap_err().code, RejectionCode::BetaRange);
    assert!(ParamCandidate::new(0.25, 6.0, 0.5, 5.0, 2).validate().is_ok());
}

#[test]
fn contraction_shape_vanishes_for_large_weights() {
    let param = reference();
    let shapes: Vec<f64> = [1.0, 1e2, 1e4, 1e8].iter().map(|&r| param.contraction_shape(r)).collect();
    assert!(shapes.windows(2).all(|w| w[1] < w[0]));
    assert!(shapes[3] < 0.1 * shapes[0]);
    assert_eq!(contraction_rho(&param, 1e-9).unwrap(), 1.0);
}

#[test]
fn weighted_norm_rejects_fractional_weights() {
    let u = time_field(1);
    assert!(rho_norm(&u, 0.5, SobolevIndex::new(0.0, 2.0).unwrap()).is_err());
}

#[test]
fn constant_field_norm_matches_snapshot() {
    let grid = GridSpec::line(32, 4.0).unwrap();
    let f = Field::constant(grid, 1, 2.0);
    let u = TimeField::constant(TimeGrid::new(1.0, 4).unwrap(), &f);
    let idx = SobolevIndex::new(0.0, 2.0).unwrap();
    let plain = rho_norm(&u, 0.0, idx).unwrap();
    assert!((rho_norm(&u, 1.0, idx).unwrap() - plain).abs() <= 1e-14 * plain);
}
