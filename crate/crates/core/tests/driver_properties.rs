use proptest::prelude::*;

use roughbsde::drivers::{certify_driver, make_driver, CertifiedDriver, DriverKind, Modulation, RoughDriverSpec};
use roughbsde::error::Error;
use roughbsde::grid::GridSpec;
use roughbsde::haar::{haar_coefficients, haar_project, mollify_project};
use roughbsde::mild::{TimeField, TimeGrid};
use roughbsde::synth::{AmplitudeProfile, FieldSynth};

const BETA: f64 = 0.3;
const Q: f64 = 3.0;

fn grid() -> GridSpec {
    GridSpec::line(256, 10.0).unwrap()
}

fn time() -> TimeGrid {
    TimeGrid::new(1.0, 16).unwrap()
}

fn rough(seed: u64, amplitude: f64) -> RoughDriverSpec {
    RoughDriverSpec {
        kind: DriverKind::FbmDerivative { hurst: 0.75 },
        amplitude,
        modulation: Modulation::Sinusoidal { depth: 0.5, frequency: 1.0 },
        seed,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn drivers_are_reproducible(seed in 0u64..1000) {
        let a = make_driver(&rough(seed, 0.5), &grid(), &time(), BETA).unwrap();
        let b = make_driver(&rough(seed, 0.5), &grid(), &time(), BETA).unwrap();
        let other = make_driver(&rough(seed + 1, 0.5), &grid(), &time(), BETA).unwrap();
        prop_assert_eq!(a.max_abs_diff(&b).unwrap(), 0.0);
        prop_assert!(a.max_abs_diff(&other).unwrap() > 0.0);
    }

    #[test]
    fn certificate_norms_scale_with_amplitude(seed in 0u64..1000, amp in 0.1f64..2.0) {
        let one = certify_driver(&make_driver(&rough(seed, amp), &grid(), &time(), BETA).unwrap(), BETA, Q).unwrap();
        let two = certify_driver(&make_driver(&rough(seed, 2.0 * amp), &grid(), &time(), BETA).unwrap(), BETA, Q).unwrap();
        prop_assert!((two.sup_norm - 2.0 * one.sup_norm).abs() <= 1e-12 * two.sup_norm);
        prop_assert!((two.continuity_modulus - 2.0 * one.continuity_modulus).abs() <= 1e-12 * two.continuity_modulus);
        prop_assert!((two.refinement_change - one.refinement_change).abs() <= 1e-12);
    }

    #[test]
    fn projectors_are_linear(s1 in 0u64..1000, s2 in 0u64..1000, a in -2.0f64..2.0, c in -2.0f64..2.0, level in 1u32..6) {
        let synth = FieldSynth::rough(AmplitudeProfile::Bessel { decay: 0.5 });
        let g = synth.sample(&grid(), s1, 0);
        let h = synth.sample(&grid(), s2, 1);
        let mixed = h.axpy(c, &g.scaled(a)).unwrap();
        for project in [haar_project, mollify_project] {
            let lhs = project(&mixed, level).unwrap();
            let rhs = project(&h, level).unwrap().axpy(c, &project(&g, level).unwrap().scaled(a)).unwrap();
            prop_assert!(lhs.max_abs_diff(&rhs).unwrap() <= 1e-12 * mixed.sup_norm().max(1.0));
        }
    }
}

#[test]
fn white_noise_drift_is_not_certified() {
    let noise = FieldSynth::rough(AmplitudeProfile::Bessel { decay: 0.0 }).sample(&grid(), 4, 0);
    let b = TimeField::constant(time(), &noise);
    assert!(matches!(CertifiedDriver::certify(b, BETA, Q), Err(Error::UncertifiedDriver(_))));
}

#[test]
fn rough_drift_below_the_regularity_threshold_is_refused() {
    let spec = RoughDriverSpec { kind: DriverKind::FbmDerivative { hurst: 0.6 }, ..rough(1, 1.0) };
    assert!(make_driver(&spec, &grid(), &time(), BETA).is_err());
}

#[test]
fn reference_drift_is_certified() {
    let b = make_driver(&rough(17, 0.5), &grid(), &time(), BETA).unwrap();
    assert!(CertifiedDriver::certify(b, BETA, Q).is_ok());
}

#[test]
fn haar_expansion_reconstructs_the_projection() {
    let h = FieldSynth::rough(AmplitudeProfile::Bessel { decay: 1.0 }).sample(&grid(), 9, 0);
    let exp = haar_coefficients(&h, 4).unwrap();
    assert_eq!(exp.reconstruct(), haar_project(&h, 4).unwrap());
}
