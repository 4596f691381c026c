use cqps_core::cqps::{aggregated_phases, total_cqps_energy, wrap_unit, ChargeConfiguration};
use cqps_core::numerics::RngSeed;
use cqps_core::phaseslip::{charge_bands, impedance_amplitude, wkb_amplitude, BandConfig};
use cqps_core::circuit::{plasma_frequency, reduced_impedance, JunctionParams};
use proptest::prelude::*;

fn config(offsets: Vec<f64>) -> ChargeConfiguration<f64> {
    ChargeConfiguration::wrapped(&offsets).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shifting_the_first_island_only_rotates_the_energy(
        offsets in prop::collection::vec(0.0f64..1.0, 2..40),
        delta in -2.0f64..2.0,
        eps_scale in 1e-4f64..1e-1,
    ) {
        let n = offsets.len() - 1;
        let eps: Vec<f64> = (0..n).map(|j| eps_scale * (1.0 + 0.1 * j as f64)).collect();
        let base = total_cqps_energy(&eps, &config(offsets.clone())).unwrap().value;
        let mut moved = offsets.clone();
        moved[0] += delta;
        let shifted = total_cqps_energy(&eps, &config(moved)).unwrap().value;
        let tol = 1e-12 * eps.iter().sum::<f64>();
        prop_assert!((base.norm() - shifted.norm()).abs() < tol);
    }

    #[test]
    fn integer_charges_and_the_last_island_do_not_matter(
        offsets in prop::collection::vec(0.0f64..1.0, 2..40),
        shifts in prop::collection::vec(-3i32..4, 40),
        last in 0.0f64..1.0,
    ) {
        let n = offsets.len() - 1;
        let eps = vec![0.01; n];
        let base = total_cqps_energy(&eps, &config(offsets.clone())).unwrap().value;
        let mut moved: Vec<f64> = offsets.iter().zip(&shifts).map(|(&o, &s)| o + s as f64).collect();
        moved[n] = last;
        let other = total_cqps_energy(&eps, &config(moved)).unwrap().value;
        prop_assert!((base - other).norm() < 1e-12 * n as f64);
    }

    #[test]
    fn aggregated_phases_are_wrapped_prefix_sums(offsets in prop::collection::vec(0.0f64..1.0, 2..30)) {
        let eta = aggregated_phases(&config(offsets.clone()));
        prop_assert_eq!(eta.len(), offsets.len() - 1);
        let mut sum = 0.0;
        for (j, &e) in eta.iter().enumerate() {
            sum += offsets[j];
            let d = (e - wrap_unit(sum)).abs();
            prop_assert!(d.min(1.0 - d) < 1e-12);
        }
    }

    #[test]
    fn closed_forms_agree(e_c in 0.05f64..5.0, ratio in 1.0f64..200.0) {
        let j = JunctionParams::from_energies(ratio * e_c, e_c).unwrap();
        let a = wkb_amplitude(j.e_j, j.e_c);
        let b = impedance_amplitude(plasma_frequency(&j), reduced_impedance(&j));
        prop_assert!(((a - b) / a).abs() < 1e-12);
    }

    #[test]
    fn wkb_amplitude_falls_with_ratio(r1 in 1.0f64..80.0, dr in 0.5f64..20.0) {
        prop_assert!(wkb_amplitude(r1 + dr, 1.0) < wkb_amplitude(r1, 1.0));
    }
}

fn band_gap_and_width(ratio: f64) -> (f64, f64) {
    let b = charge_bands(ratio, 1.0, &BandConfig::default()).unwrap();
    let max0 = b.bands[0].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min0 = b.bands[0].iter().cloned().fold(f64::INFINITY, f64::min);
    let min1 = b.bands[1].iter().cloned().fold(f64::INFINITY, f64::min);
    (min1 - max0, max0 - min0)
}

#[test]
fn band_gap_grows_and_ground_band_flattens_with_ratio() {
    let ratios = [1.0, 2.0, 5.0, 10.0, 20.0, 40.0];
    let stats: Vec<(f64, f64)> = ratios.iter().map(|&r| band_gap_and_width(r)).collect();
    for w in stats.windows(2) {
        assert!(w[1].0 > w[0].0, "gap {:?}", stats);
        assert!(w[1].1 < w[0].1, "width {:?}", stats);
    }
}

#[test]
fn random_configurations_are_reproducible() {
    let a = ChargeConfiguration::<f64>::uniform_random(85, &mut RngSeed(5).rng());
    let b = ChargeConfiguration::<f64>::uniform_random(85, &mut RngSeed(5).rng());
    assert_eq!(a.digest(), b.digest());
    assert_eq!(a.offsets().len(), 86);
}
