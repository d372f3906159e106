use proptest::prelude::*;

use roughbsde::bsde::{default_conditioning, martingale_test, BsdeModel, MartingaleSample};
use roughbsde::drivers::{box_taper, make_driver, CertifiedDriver, DriverKind, Modulation, RoughDriverSpec};
use roughbsde::grid::{Field, GridSpec};
use roughbsde::haar::{density_approximant, ApproxRoute};
use roughbsde::interp::InterpOrder;
use roughbsde::mild::{solve_semilinear_u, PicardOptions, TimeField, TimeGrid};
use roughbsde::occupation::{covariation, BrownianPath, ChainRuleOperator, EnsembleSpec, SamplePath};
use roughbsde::params::{BuiltinDriver, ParamCandidate, ParamSet};
use roughbsde::synth::{AmplitudeProfile, FieldSynth};

const LINEARITY_TOL: f64 = 1e-10;
const IDENTITY_TOL: f64 = 1e-6;
/// The spectral gradient of the tapered terminal condition carries the slow
/// Fourier decay of the taper.
const GRADIENT_TOL: f64 = 1e-4;
const FK_TOL: f64 = 1e-3;
/// Standard deviations allowed for the discrete quadratic variation.
const QV_SIGMAS: f64 = 5.0;

fn param() -> ParamSet {
    ParamCandidate::new(0.3, 3.0, 0.5, 2.5, 1).validate().unwrap()
}

fn grid() -> GridSpec {
    GridSpec::line(256, 10.0).unwrap()
}

fn forcing(seed: u64, time: TimeGrid) -> TimeField {
    let base = FieldSynth::rough(AmplitudeProfile::Bessel { decay: 0.5 }).sample(&grid(), seed, 0);
    let base = base.mul_samples(&box_taper(&grid())).unwrap();
    TimeField::from_fn(time, |t| base.scaled(1.0 + t)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn occupation_operator_is_linear(s1 in 0u64..1000, s2 in 0u64..1000, path in 0u64..1000, a in -2.0f64..2.0, c in -2.0f64..2.0) {
        let time = TimeGrid::new(1.0, 32).unwrap();
        let (l1, l2) = (forcing(s1, time), forcing(s2 + 1000, time));
        let zero = Field::zeros(grid(), 1);
        let op = |l: &TimeField| ChainRuleOperator::new(l, &zero, &param(), InterpOrder::Cubic).unwrap();
        let w = BrownianPath::generate(TimeGrid::new(1.0, 256).unwrap(), 1, 3, path);
        let mixed = op(&l2.axpy(c, &l1.scaled(a)).unwrap()).apply(&w).unwrap().path;
        let expected = op(&l2).apply(&w).unwrap().path.axpy(c, &scale(&op(&l1).apply(&w).unwrap().path, a)).unwrap();
        let size = expected.values().iter().fold(1.0f64, |m, v| m.max(v.abs()));
        prop_assert!(mixed.sup_distance(&expected).unwrap() <= LINEARITY_TOL * size);
    }
}

fn scale(p: &SamplePath, a: f64) -> SamplePath {
    p.axpy(a, &SamplePath::zeros(*p.time(), p.dim())).unwrap()
}

#[test]
fn occupation_operator_is_continuous_along_mollified_forcing() {
    let time = TimeGrid::new(1.0, 32).unwrap();
    let l = forcing(11, time);
    let zero = Field::zeros(grid(), 1);
    let exact = ChainRuleOperator::new(&l, &zero, &param(), InterpOrder::Cubic).unwrap();
    let fine = EnsembleSpec::new(50, TimeGrid::new(1.0, 256).unwrap(), 1, 21).unwrap();
    let gap = |level: u32| -> f64 {
        let (approx, _) = density_approximant(&l, ApproxRoute::Mollifier, level, param().drift_index()).unwrap();
        let op = ChainRuleOperator::new(&approx, &zero, &param(), InterpOrder::Cubic).unwrap();
        let gaps = fine.map(|w| op.apply(w)?.path.sup_distance(&exact.apply(w)?.path)).unwrap();
        gaps.into_iter().fold(0.0, f64::max)
    };
    let gaps: Vec<f64> = [1u32, 4, 16, 64, 256].iter().map(|&n| gap(n)).collect();
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
    assert!(gaps[4] < 1e-2 * gaps[0], "{gaps:?}");
}

#[test]
fn brownian_quadratic_variation_is_time() {
    let steps = 4096;
    let time = TimeGrid::new(1.0, steps).unwrap();
    let sigma = (2.0 / steps as f64).sqrt();
    for id in 0..16 {
        let w = BrownianPath::generate(time, 1, 8, id);
        let qv = covariation(w.positions(), w.positions(), 1).unwrap();
        for k in [steps / 4, steps / 2, steps] {
            let t = time.node(k);
            assert!((qv.at(k)[0] - t).abs() <= QV_SIGMAS * sigma * t.sqrt(), "path {id} node {k}");
        }
    }
}

/// The zero drift, on which the BSDE reduces to free Brownian motion.
fn free(time: TimeGrid) -> CertifiedDriver {
    let p = param();
    let spec = RoughDriverSpec { kind: DriverKind::Zero, amplitude: 1.0, modulation: Modulation::Constant, seed: 0 };
    CertifiedDriver::certify(make_driver(&spec, &grid(), &time, p.beta()).unwrap(), p.beta(), p.q()).unwrap()
}

fn tapered(f: impl Fn(f64) -> f64) -> Field {
    box_taper(&grid()).mul_samples(&Field::scalar_from_fn(grid(), |x| f(x[0]))).unwrap()
}

fn model<'a>(b: &CertifiedDriver, terminal: &Field, f: &'a BuiltinDriver) -> BsdeModel<'a> {
    let (u, _) = solve_semilinear_u(b, f, terminal, &param(), &PicardOptions::default()).unwrap();
    BsdeModel::new(u, b, f, &param(), InterpOrder::Cubic).unwrap()
}

#[test]
fn free_motion_with_identity_terminal_reproduces_the_path() {
    let setup = free(TimeGrid::new(1.0, 32).unwrap());
    let f = BuiltinDriver::Zero;
    let m = model(&setup, &tapered(|x| x), &f);
    let ensemble = EnsembleSpec::new(20, TimeGrid::new(1.0, 128).unwrap(), 1, 4).unwrap();
    ensemble
        .map(|w| {
            let sol = m.assemble(w)?;
            for n in 0..=w.time().steps() {
                let x = w.position(n)[0];
                assert!((sol.y.at(n)[0] - x).abs() <= IDENTITY_TOL, "Y at {n}");
                assert!((sol.z.at(n)[0] - 1.0).abs() <= GRADIENT_TOL, "Z at {n}");
                assert!((sol.m.at(n)[0] - x).abs() <= IDENTITY_TOL, "M at {n}");
            }
            Ok(())
        })
        .unwrap();
}

#[test]
fn free_motion_with_quadratic_terminal_matches_feynman_kac() {
    let setup = free(TimeGrid::new(1.0, 32).unwrap());
    let f = BuiltinDriver::Zero;
    let m = model(&setup, &tapered(|x| x * x), &f);
    let ensemble = EnsembleSpec::new(4000, TimeGrid::new(1.0, 32).unwrap(), 1, 6).unwrap();
    let est = m.feynman_kac(0.0, &[0.0], &ensemble).unwrap();
    assert!((est.reference[0] - 1.0).abs() <= IDENTITY_TOL, "reference {}", est.reference[0]);
    let e = &est.components[0];
    assert!((e.mean - 1.0).abs() <= 3.0 * e.stderr + FK_TOL, "{} ± {}", e.mean, e.stderr);
}

#[test]
fn brownian_motion_passes_the_martingale_test_and_time_fails_it() {
    let time = TimeGrid::new(1.0, 64).unwrap();
    let ensemble = EnsembleSpec::new(2000, time, 1, 12).unwrap();
    let nodes = default_conditioning(time.steps());
    let labels: Vec<f64> = nodes.iter().map(|&k| time.node(k)).collect();
    let bm = ensemble.map(|w| Ok(MartingaleSample::extract(w.positions(), w.positions(), &nodes))).unwrap();
    assert!(martingale_test(&bm, &labels).unwrap().pass);
    let clock = ensemble
        .map(|w| {
            let t = SamplePath::new(time, 1, time.nodes()).unwrap();
            Ok(MartingaleSample::extract(&t, w.positions(), &nodes))
        })
        .unwrap();
    assert!(!martingale_test(&clock, &labels).unwrap().pass);
}
