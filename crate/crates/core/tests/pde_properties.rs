use proptest::prelude::*;

use roughbsde::drivers::{make_driver, CertifiedDriver, DriverKind, Modulation, RoughDriverSpec};
use roughbsde::grid::{Field, GridSpec};
use roughbsde::mild::{duhamel, duhamel_all, solve_semilinear_u, PicardOptions, TimeField, TimeGrid};
use roughbsde::params::{BuiltinDriver, ParamCandidate, ParamSet};
use roughbsde::spectral::heat_semigroup;
use roughbsde::synth::{AmplitudeProfile, FieldSynth};

const FIXED_POINT_FACTOR: f64 = 10.0;
const HEAT_TOL: f64 = 1e-12;
const LINEARITY_TOL: f64 = 1e-12;

fn param() -> ParamSet {
    ParamCandidate::new(0.3, 3.0, 0.5, 2.5, 1).validate().unwrap()
}

fn grid() -> GridSpec {
    GridSpec::line(128, 10.0).unwrap()
}

fn time() -> TimeGrid {
    TimeGrid::new(1.0, 64).unwrap()
}

fn bump(grid: GridSpec, width: f64) -> Field {
    Field::scalar_from_fn(grid, |x| (-x[0] * x[0] / (2.0 * width * width)).exp())
}

fn driver(kind: DriverKind, amplitude: f64) -> CertifiedDriver {
    let p = param();
    let spec = RoughDriverSpec { kind, amplitude, modulation: Modulation::Constant, seed: 5 };
    CertifiedDriver::certify(make_driver(&spec, &grid(), &time(), p.beta()).unwrap(), p.beta(), p.q()).unwrap()
}

fn forcing(seed: u64) -> TimeField {
    let base = FieldSynth::rough(AmplitudeProfile::Bessel { decay: 1.0 }).sample(&grid(), seed, 0);
    TimeField::from_fn(time(), |t| base.scaled((2.0 * t).cos())).unwrap()
}

#[test]
fn terminal_slice_is_the_terminal_condition() {
    let b = driver(DriverKind::SmoothBump { center: 0.0, width: 1.0 }, 0.3);
    let phi = bump(grid(), 1.0);
    let f = BuiltinDriver::SaturatingInZ { lipschitz: 0.5 };
    let (u, _) = solve_semilinear_u(&b, &f, &phi, &param(), &PicardOptions::default()).unwrap();
    assert_eq!(u.snapshot(time().steps()), &phi);
}

#[test]
fn smooth_drift_reaches_a_fixed_point() {
    let b = driver(DriverKind::SmoothBump { center: 0.5, width: 1.5 }, 0.4);
    let f = BuiltinDriver::LinearInY { k: 0.7 };
    let opts = PicardOptions::default();
    let (_, report) = solve_semilinear_u(&b, &f, &bump(grid(), 1.0), &param(), &opts).unwrap();
    assert!(report.residual <= FIXED_POINT_FACTOR * opts.tol, "residual {:.3e}", report.residual);
}

#[test]
fn zero_drift_and_driver_give_the_heat_flow() {
    let b = driver(DriverKind::Zero, 1.0);
    let phi = bump(grid(), 0.8);
    let (u, _) = solve_semilinear_u(&b, &BuiltinDriver::Zero, &phi, &param(), &PicardOptions::default()).unwrap();
    for (k, snap) in u.snapshots().iter().enumerate() {
        let exact = heat_semigroup(&phi, 1.0 - time().node(k)).unwrap();
        assert!(snap.max_abs_diff(&exact).unwrap() <= HEAT_TOL, "node {k}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn duhamel_integral_is_linear(s1 in 0u64..1000, s2 in 0u64..1000, a in -2.0f64..2.0, c in -2.0f64..2.0) {
        let (l1, l2) = (forcing(s1), forcing(s2 + 1000));
        let mixed = duhamel_all(&l2.axpy(c, &l1.scaled(a)).unwrap()).unwrap();
        let split = duhamel_all(&l2).unwrap().axpy(c, &duhamel_all(&l1).unwrap().scaled(a)).unwrap();
        let scale = split.snapshots().iter().map(Field::sup_norm).fold(1.0, f64::max);
        prop_assert!(mixed.max_abs_diff(&split).unwrap() <= LINEARITY_TOL * scale);
    }

    #[test]
    fn single_node_duhamel_matches_the_sweep(seed in 0u64..1000, k in 0usize..=64) {
        let l = forcing(seed);
        let all = duhamel_all(&l).unwrap();
        let one = duhamel(&l, k).unwrap();
        prop_assert!(one.max_abs_diff(all.snapshot(k)).unwrap() <= LINEARITY_TOL * all.snapshot(0).sup_norm().max(1.0));
    }
}
