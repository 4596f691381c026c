use cqps_core::circuit::FluxoniumParams;
use cqps_core::cqps::{displacement_overlap, structure_factor};
use cqps_core::numerics::{symmetric_eigenvalues, SymmetricMatrix};
use cqps_core::spectrum::{eigensystem, energy_levels, flux_dispersion, wavefunctions_on_grid, BasisConfig, GridSpec};
use proptest::prelude::*;

/// Determinant by Gaussian elimination with partial pivoting.
fn det(mut a: Vec<Vec<f64>>) -> f64 {
    let n = a.len();
    let mut d = 1.0;
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        if a[p][c] == 0.0 {
            return 0.0;
        }
        if p != c {
            a.swap(p, c);
            d = -d;
        }
        d *= a[c][c];
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
        }
    }
    d
}

fn laguerre(n: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, 1.0 - x);
    if n == 0 {
        return prev;
    }
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 - x) * cur - kf * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

fn params() -> impl Strategy<Value = FluxoniumParams<f64>> {
    (1.0f64..6.0, 0.8f64..2.0, 0.2f64..1.5).prop_map(|(j, c, l)| FluxoniumParams::new(j, c, l).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn eigenvalues_are_roots_of_the_characteristic_polynomial(entries in prop::collection::vec(-3.0f64..3.0, 10)) {
        let mut it = entries.into_iter();
        let mut lower = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..=i {
                lower[i][j] = it.next().unwrap();
            }
        }
        let m = SymmetricMatrix::from_lower(4, |i, j| lower[i][j]);
        let values = symmetric_eigenvalues(&m).unwrap();
        let full: Vec<Vec<f64>> = (0..4).map(|i| (0..4).map(|j| m.get(i, j)).collect()).collect();
        let scale = m.frobenius_norm().max(1.0);
        for &lambda in &values {
            let shifted: Vec<Vec<f64>> = full
                .iter()
                .enumerate()
                .map(|(i, row)| row.iter().enumerate().map(|(j, &v)| if i == j { v - lambda } else { v }).collect())
                .collect();
            prop_assert!(det(shifted).abs() < 1e-10 * scale.powi(4), "det at {lambda}");
        }
        let trace: f64 = (0..4).map(|i| m.get(i, i)).sum();
        prop_assert!((values.iter().sum::<f64>() - trace).abs() < 1e-12 * scale * 4.0);
        let sq: f64 = values.iter().map(|v| v * v).sum();
        let fro = m.frobenius_norm();
        prop_assert!((sq - fro * fro).abs() < 1e-10 * (1.0 + fro * fro));
    }

    #[test]
    fn spectrum_is_periodic_and_even_in_flux(p in params(), phi in -1.0f64..1.0) {
        let b = BasisConfig::with_dimension(80).unchecked();
        let e = energy_levels(&p.at_flux(phi), &b, 3).unwrap();
        let shifted = energy_levels(&p.at_flux(phi + 1.0), &b, 3).unwrap();
        let mirrored = energy_levels(&p.at_flux(-phi), &b, 3).unwrap();
        for k in 0..3 {
            prop_assert!((e[k] - shifted[k]).abs() < 1e-9);
            prop_assert!((e[k] - mirrored[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn spectrum_ignores_offset_charge(p in params(), phi in 0.0f64..1.0, ng in 0.0f64..1.0) {
        let b = BasisConfig::with_dimension(80).unchecked();
        let a = energy_levels(&p.at_flux(phi), &b, 3).unwrap();
        let c = energy_levels(&p.at_flux(phi).with_offset_charge(ng), &b, 3).unwrap();
        prop_assert_eq!(a, c);
    }

    #[test]
    fn structure_factor_magnitude_ignores_offset_charge(ng in 0.0f64..1.0) {
        let p = FluxoniumParams::new(3.22, 1.41, 0.25).unwrap().at_flux(0.5);
        let a = structure_factor(&p, 0, 1).unwrap();
        let c = structure_factor(&p.with_offset_charge(ng), 0, 1).unwrap();
        prop_assert!((a.magnitude() - c.magnitude()).abs() < 1e-12);
        let phase = (c.value / a.value).arg();
        let want = -std::f64::consts::TAU * ng;
        let diff = (phase - want).rem_euclid(std::f64::consts::TAU);
        prop_assert!(diff.min(std::f64::consts::TAU - diff) < 1e-9);
    }

    #[test]
    fn oscillator_overlap_matches_displacement_operator(e_c in 0.8f64..1.5, e_l in 0.6f64..2.0) {
        // With a vanishing junction the states are oscillator states and
        // <n|D|n> = exp(-x/2) L_n(x) with x = π²/φ_zpf².
        let p = FluxoniumParams::new(1e-9, e_c, e_l).unwrap();
        let sol = eigensystem(&p, &BasisConfig::with_dimension(60), 4).unwrap();
        let grid = wavefunctions_on_grid(&sol, &GridSpec::default()).unwrap();
        let x = std::f64::consts::PI.powi(2) / p.phase_zpf().powi(2);
        for n in 0..4 {
            let got = displacement_overlap(&grid, n).unwrap();
            let want = (-x / 2.0).exp() * laguerre(n, x);
            prop_assert!((got.abs() - want.abs()).abs() < 1e-7, "level {n}: {got} vs {want}");
        }
    }

    #[test]
    fn dispersion_matches_hellmann_feynman(p in params(), phi in 0.05f64..0.45) {
        // ∂H/∂Φ_ext = −2π E_J sin φ in the coordinates of the sampled grid.
        let p = p.at_flux(phi);
        let basis = BasisConfig::with_dimension(120);
        let sol = eigensystem(&p, &basis, 2).unwrap();
        let grid = wavefunctions_on_grid(&sol, &GridSpec { half_width_pi: 16, intervals: 8192 }).unwrap();
        let expect = |level: usize| -> f64 {
            let v = &grid.values[level];
            v.iter().zip(&grid.points).map(|(&psi, &x)| psi * psi * x.sin()).sum::<f64>() * grid.step()
        };
        let hf = -std::f64::consts::TAU * p.e_j * (expect(1) - expect(0));
        let fd = flux_dispersion(&p, &basis, 0, 1, 1e-4).unwrap().value;
        prop_assert!((hf - fd).abs() < 1e-5 * (1.0 + fd.abs()), "{hf} vs {fd}");
    }
}

#[test]
fn f32_spectrum_tracks_f64() {
    let p64 = FluxoniumParams::new(3.22f64, 1.41, 0.25).unwrap().at_flux(0.5);
    let p32 = FluxoniumParams::new(3.22f32, 1.41, 0.25).unwrap().at_flux(0.5);
    let b = BasisConfig::with_dimension(80).unchecked();
    let e64 = energy_levels(&p64, &b, 3).unwrap();
    let e32 = energy_levels(&p32, &b, 3).unwrap();
    // Single precision rounds at ~1e-7 of the largest diagonal entry (~90 GHz).
    let f64_01 = e64[1] - e64[0];
    let f32_01 = (e32[1] - e32[0]) as f64;
    assert!((f64_01 - f32_01).abs() < 1e-3, "{f64_01} vs {f32_01}");
}
