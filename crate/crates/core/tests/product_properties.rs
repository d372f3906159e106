use proptest::prelude::*;

use roughbsde::grid::{GridSpec, Spectrum};
use roughbsde::paraproduct::{
    cutoff_multiplier, nyquist_level, pointwise_product, rough_factor_synth, smooth_factor_synth, smooth_truncate,
    truncated_product, CutoffProfile, CutoffSpec, Pairing,
};
use roughbsde::spectral::SobolevIndex;

fn grid(two_d: bool) -> GridSpec {
    if two_d {
        GridSpec::new(2, 16, 4.0).unwrap()
    } else {
        GridSpec::line(128, 8.0).unwrap()
    }
}

fn profile(smooth: bool) -> CutoffProfile {
    if smooth {
        CutoffProfile::SmoothStep
    } else {
        CutoffProfile::RaisedCosine
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn truncated_product_is_bilinear(
        two_d: bool, smooth: bool, seed in 0u64..1000, level in 0u32..4, a in -3.0f64..3.0, b in -3.0f64..3.0,
    ) {
        let grid = grid(two_d);
        let spec = CutoffSpec { level: Some(level), profile: profile(smooth) };
        let g1 = rough_factor_synth().sample(&grid, seed, 0);
        let g2 = rough_factor_synth().sample(&grid, seed, 1);
        let h = smooth_factor_synth(&grid).sample(&grid, seed, 2);
        let mixed = g2.axpy(b, &g1.scaled(a)).unwrap();
        let lhs = truncated_product(&mixed, &h, spec, Pairing::Componentwise).unwrap();
        let prod = |g: &roughbsde::grid::Field| truncated_product(g, &h, spec, Pairing::Componentwise).unwrap();
        let rhs = prod(&g2).axpy(b, &prod(&g1).scaled(a)).unwrap();
        let scale = lhs.sup_norm().max(rhs.sup_norm()).max(1.0);
        prop_assert!(lhs.max_abs_diff(&rhs).unwrap() <= 1e-12 * scale);
    }

    #[test]
    fn full_level_product_is_the_sample_product(two_d: bool, seed in 0u64..1000) {
        let grid = grid(two_d);
        let g = rough_factor_synth().sample(&grid, seed, 0);
        let h = smooth_factor_synth(&grid).sample(&grid, seed, 1);
        let direct = g.mul_samples(&h).unwrap();
        let top = CutoffSpec { level: Some(nyquist_level(&grid)), ..CutoffSpec::default() };
        prop_assert_eq!(&truncated_product(&g, &h, CutoffSpec::default(), Pairing::Componentwise).unwrap(), &direct);
        prop_assert_eq!(&truncated_product(&g, &h, top, Pairing::Componentwise).unwrap(), &direct);
        let idx = SobolevIndex::new(-0.3, 2.0).unwrap();
        let (limit, _) = pointwise_product(&g, &h, CutoffSpec::default(), Pairing::Componentwise, idx).unwrap();
        prop_assert!(limit.max_abs_diff(&direct).unwrap() <= 1e-12 * direct.sup_norm().max(1.0));
    }

    #[test]
    fn truncation_is_a_projection_off_the_transition_band(
        two_d: bool, smooth: bool, seed in 0u64..1000, level in 0u32..4,
    ) {
        let grid = grid(two_d);
        let p = profile(smooth);
        let f = rough_factor_synth().sample(&grid, seed, 0);
        let once = smooth_truncate(&f, level, p).unwrap();
        let twice = smooth_truncate(&once, level, p).unwrap();
        let gap = Spectrum::from_field(&twice.sub(&once).unwrap());
        let scale = Spectrum::from_field(&f).data().iter().map(|z| z.norm()).fold(0.0, f64::max);
        for (z, m) in gap.data().iter().zip(cutoff_multiplier(&grid, level, p)) {
            if m == 0.0 || m == 1.0 {
                prop_assert!(z.norm() <= 1e-12 * scale);
            }
        }
    }
}

#[test]
fn cutoff_profiles_are_monotone_between_one_and_zero() {
    for p in [CutoffProfile::RaisedCosine, CutoffProfile::SmoothStep] {
        let vals: Vec<f64> = (0..=300).map(|i| p.eval(i as f64 / 100.0)).collect();
        assert_eq!(vals[0], 1.0);
        assert_eq!(vals[100 - 1], 1.0);
        assert_eq!(vals[200], 0.0);
        assert!(vals.windows(2).all(|w| w[1] <= w[0]));
    }
}
