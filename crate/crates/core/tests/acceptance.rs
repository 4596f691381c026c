//! Acceptance checks, one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`). The process fails when a
//! criterion fails, unless that criterion is listed in `DOCUMENTED_FAILURES`;
//! those still print FAIL.

use std::time::{Duration, Instant};

use cqps_core::analysis::{
    fit_power_law, fit_ramsey, fit_spectrum, flux_amplitude_from_psd, frequency_psd, roll_off, synthetic_power_law,
    synthetic_ramsey, synthetic_spectroscopy, synthetic_white, synthetic_flux_noise_series, RamseyFitOptions,
    RamseyTruth, SpectrumFitOptions, Transition,
};
use cqps_core::circuit::{FluxoniumParams, JunctionParams};
use cqps_core::cqps::{cqps_dephasing_rate, junction_epsilons, sample_cqps_energy, structure_factor};
use cqps_core::dephasing::coherence_vs_flux;
use cqps_core::design::{run_sweep, Axis, AxisName, SweepOptions, SweepSpec};
use cqps_core::numerics::{average_spectra, periodogram, RngSeed};
use cqps_core::paritysim::{run, SimConfig};
use cqps_core::phaseslip::{band_fourier_amplitudes, charge_bands, wkb_amplitude, BandConfig};
use cqps_core::presets::table1;
use cqps_core::spectrum::{energy_levels, flux_dispersion, BasisConfig, GridSpec};
use cqps_core::circuit::{plasma_frequency, reduced_impedance};
use cqps_core::phaseslip::impedance_amplitude;
use rand::Rng;

/// The faithful model misses this criterion; see the decisions ledger.
const DOCUMENTED_FAILURES: &[u32] = &[5];

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}


fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn c1_half_flux_frequencies() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for q in table1::<f64>().qubits {
        let e = energy_levels(&q.params().at_flux(0.5), &BasisConfig::default(), 2).unwrap();
        let f01 = e[1] - e[0];
        let rel = (f01 / q.f01 - 1.0).abs();
        worst = worst.max(rel);
        parts.push(format!("{} {f01:.4}", q.label));
    }
    let t = start.elapsed();
    check(
        worst <= 0.02 && t < Duration::from_secs(5),
        format!("f01 GHz [{}]; worst rel dev {worst:.4} (tol 0.02); {t:.2?} (limit 5 s)", parts.join(", ")),
    )
}

fn c2_cqps_scaling() -> Outcome {
    let start = Instant::now();
    let t1 = table1::<f64>();
    let mut ok = true;
    let mut parts = Vec::new();
    let mut geometric = Vec::new();
    for q in &t1.qubits {
        let array = q.array_from_inductance(&t1.process).unwrap();
        let eps = junction_epsilons(&array).unwrap()[0];
        if q.label == "Q6" {
            let model = q.qubit_model(&array).unwrap();
            let rows =
                coherence_vs_flux(&model, &linspace(0.0, 1.0, 101), &BasisConfig::default(), &GridSpec::default(), 1e-4)
                    .unwrap();
            let min_t = rows.iter().map(|r| r.t_cqps).fold(f64::INFINITY, f64::min);
            ok &= min_t > 1e-3;
            parts.push(format!("Q6 min T_cqps {:.3} ms (> 1 ms)", min_t * 1e3));
        } else {
            let f = structure_factor(&q.params().at_flux(0.5), 0, 1).unwrap();
            let t = 1.0 / cqps_dephasing_rate(q.n, eps, &f);
            let ratio = t / (q.t_phi_r_us * 1e-6);
            ok &= (0.5..=2.0).contains(&ratio);
            parts.push(format!("{} {:.3} us (x{ratio:.2})", q.label, t * 1e6));
        }
        let e_l_geo = q.geometric_inductive_energy(&t1.process).unwrap();
        geometric.push(format!("{} {e_l_geo:.3}", q.label));
    }
    let t = start.elapsed();
    ok &= t < Duration::from_secs(60);
    check(
        ok,
        format!(
            "1/Gamma [{}]; factor-2 band; {t:.2?} (limit 60 s). E_JA/N from J_c geometry, GHz: [{}]",
            parts.join(", "),
            geometric.join(", ")
        ),
    )
}

fn c3_phase_slip_forms() -> Outcome {
    let mut rng = RngSeed(31).rng();
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let e_c: f64 = rng.gen_range(0.05..5.0);
        let e_j = e_c * rng.gen_range(1.0..100.0);
        let j = JunctionParams::from_energies(e_j, e_c).unwrap();
        let a = wkb_amplitude(e_j, e_c);
        let b = impedance_amplitude(plasma_frequency(&j), reduced_impedance(&j));
        worst = worst.max(((a - b) / a).abs());
    }
    let mut ok = worst <= 1e-12;
    let mut parts = vec![format!("closed forms max rel diff {worst:.1e} (tol 1e-12)")];
    let cfg = BandConfig::default();
    for ratio in [10.0f64, 20.0, 30.0, 50.0] {
        let bands = charge_bands(ratio, 1.0, &cfg).unwrap();
        let amps = band_fourier_amplitudes(&bands.k, &bands.bands[0], 0, 2).unwrap();
        let wkb = wkb_amplitude(ratio, 1.0);
        let rel = (amps[0].value / wkb - 1.0).abs();
        let suppression = amps[0].value / amps[1].value;
        ok &= suppression > 10.0;
        if ratio >= 20.0 {
            ok &= rel <= 0.10;
        }
        parts.push(format!("EJ/EC={ratio}: band/WKB dev {rel:.3}, eps(0,1)/eps(0,2) {suppression:.2e}"));
    }
    check(ok, parts.join("; "))
}

fn c4_central_limit() -> Outcome {
    let n = 85;
    let eps = 1e-3;
    let stats = sample_cqps_energy(&vec![eps; n], 100_000, RngSeed(4)).unwrap();
    let want = (n as f64 / 2.0).sqrt() * eps;
    let rel = stats.std_re / want - 1.0;
    check(rel.abs() <= 0.02, format!("std Re E = {:.5e}, sqrt(N/2) eps = {want:.5e}, rel {rel:+.4} (tol 0.02)", stats.std_re))
}

fn c5_parity_psd() -> Outcome {
    let start = Instant::now();
    let cfg = SimConfig::<f64>::paper_fig5();
    let result = run(&cfg).unwrap();
    let t = start.elapsed();
    let low = fit_power_law(&result.psd, (1e-4, 1e-2)).unwrap();
    let knee = roll_off(&result.psd, (1e-4, 1e-2)).unwrap();
    let tau_corner = 1.0 / (2.0 * std::f64::consts::PI * cfg.tau_qp);
    let above_tau = fit_power_law(&result.psd, (tau_corner, 10.0 * tau_corner)).unwrap();
    let ok = low.mu.abs() < 0.2 && knee.slope <= -1.5 && t < Duration::from_secs(120);
    check(
        ok,
        format!(
            "mu {:+.3} over 1e-4..1e-2 Hz (|mu| tol 0.2); plateau {:.2} eps^2/Hz; half-power corner {:.3} Hz, slope over next decade {:.2} (need <= -1.5); slope over [{:.1}, {:.0}] Hz {:.2}; x_qp {:.2e}; {t:.1?} (limit 120 s)",
            low.mu,
            knee.plateau,
            knee.corner_hz,
            knee.slope,
            tau_corner,
            10.0 * tau_corner,
            -above_tau.mu,
            result.context.x_qp
        ),
    )
}

fn c6_dephasing_morphology() -> Outcome {
    let t1 = table1::<f64>();
    let flux = linspace(0.0, 1.0, 201);
    let mid = 100;
    let mut parts = Vec::new();
    let mut ok = true;
    for label in ["Q6", "Q1"] {
        let q = t1.qubits.iter().find(|q| q.label == label).unwrap();
        let model = q.qubit_model(&q.array_from_inductance(&t1.process).unwrap()).unwrap();
        let rows = coherence_vs_flux(&model, &flux, &BasisConfig::default(), &GridSpec::default(), 1e-4).unwrap();
        let t: Vec<f64> = rows.iter().map(|r| r.t_total).collect();
        if label == "Q6" {
            // Φ = 0 is also a sweet spot, so the peak is tested over the half
            // period around 0.5.
            let window = 50..=150;
            let argmax = window.clone().max_by(|&a, &b| t[a].total_cmp(&t[b])).unwrap();
            let peak = argmax == mid && t[mid] > t[mid - 1] && t[mid] > t[mid + 1];
            ok &= peak;
            parts.push(format!(
                "Q6 max over [0.25, 0.75] at phi={:.3} ({:.3} us; neighbours {:.3}/{:.3} us)",
                flux[argmax],
                t[argmax] * 1e6,
                t[mid - 1] * 1e6,
                t[mid + 1] * 1e6
            ));
        } else {
            // Local dip: T at 0.5 below the nearest maxima on either side.
            let left = t[..mid].iter().cloned().fold(0.0, f64::max);
            let right = t[mid + 1..].iter().cloned().fold(0.0, f64::max);
            let dip = t[mid] < t[mid - 1] && t[mid] < t[mid + 1] && t[mid] < left && t[mid] < right;
            ok &= dip;
            parts.push(format!(
                "Q1 T(0.5) {:.3} us, neighbours {:.3}/{:.3} us, side maxima {:.3}/{:.3} us",
                t[mid] * 1e6,
                t[mid - 1] * 1e6,
                t[mid + 1] * 1e6,
                left * 1e6,
                right * 1e6
            ));
        }
    }
    check(ok, parts.join("; "))
}

fn c7_analysis_closures() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    let truth = FluxoniumParams::new(3.1, 1.45, 0.26).unwrap();
    let start = FluxoniumParams::new(3.4, 1.3, 0.3).unwrap();
    let transitions = [Transition::new(0, 1).unwrap(), Transition::new(0, 2).unwrap(), Transition::new(1, 2).unwrap()];
    for (noise, tol) in [(0.0, 1e-3), (1e-3, 1e-2)] {
        let d = synthetic_spectroscopy(&truth, &linspace(0.3, 0.7, 11), &transitions, 1e-3, noise, RngSeed(7)).unwrap();
        let fit = fit_spectrum(&d, &start, &SpectrumFitOptions::default()).unwrap();
        let worst = [(fit.e_j, 3.1), (fit.e_c, 1.45), (fit.e_l, 0.26)]
            .iter()
            .map(|(g, w)| (g / w - 1.0).abs())
            .fold(0.0, f64::max);
        ok &= worst <= tol;
        parts.push(format!("spectrum noise {:.0} MHz: worst rel {worst:.1e} (tol {tol})", noise * 1e3));
    }

    let rt = RamseyTruth {
        t1_us: 56.5,
        t_phi_us: 0.21,
        freq_mhz: 12.0,
        phase: 0.3,
        amplitude: 0.45,
        offset: 0.5,
    };
    let trace = synthetic_ramsey(linspace(0.0, 0.6, 121), &rt, 0.005, &mut RngSeed(8).rng()).unwrap();
    let fit = fit_ramsey(&trace, &RamseyFitOptions::default()).unwrap();
    let rel = (fit.t_phi / rt.t_phi_us - 1.0).abs();
    ok &= rel <= 0.01;
    parts.push(format!("Ramsey T_phi rel {rel:.1e} (tol 0.01)"));

    let n = 1 << 14;
    let dt = 1.0;
    let spectra = |gen: &dyn Fn(u64) -> Vec<f64>| {
        let s: Vec<_> = (0..16).map(|k| periodogram(&gen(k), dt).unwrap()).collect();
        average_spectra(&s).unwrap()
    };
    let pink = spectra(&|k| synthetic_power_law(n, dt, 1.0, 1.0, RngSeed(100 + k)).unwrap());
    let white = spectra(&|k| synthetic_white(n, dt, 1.0, RngSeed(200 + k)).unwrap());
    let mu_pink = fit_power_law(&pink, (1e-3, 0.5)).unwrap().mu;
    let mu_white = fit_power_law(&white, (1e-3, 0.5)).unwrap().mu;
    ok &= (mu_pink - 1.0).abs() <= 0.1 && mu_white.abs() <= 0.1;
    parts.push(format!("mu 1/f {mu_pink:.3}, white {mu_white:.3} (tol 0.1)"));

    let q6 = table1::<f64>().qubits.into_iter().find(|q| q.label == "Q6").unwrap();
    let d = flux_dispersion(&q6.params().at_flux(0.42), &BasisConfig::default(), 0, 1, 1e-4).unwrap().value;
    let psds: Vec<_> = (0..8)
        .map(|k| frequency_psd(&synthetic_flux_noise_series(n, 58.0, 5.9, d, 454.0, RngSeed(300 + k)).unwrap()).unwrap())
        .collect();
    let psd = average_spectra(&psds).unwrap();
    let m = fit_power_law(&psd, (psd.frequencies[1], psd.frequencies[psd.len() - 1])).unwrap();
    let a = flux_amplitude_from_psd(m.m, d).unwrap();
    let rel = (a / 5.9 - 1.0).abs();
    ok &= rel <= 0.10;
    parts.push(format!(
        "A_phi planted 5.9 uPhi0/rtHz at |d| {:.3} GHz/Phi0, recovered {a:.3} (rel {rel:.3}, tol 0.1; fitted mu {:.3})",
        d.abs(),
        m.mu
    ));
    check(ok, parts.join("; "))
}

fn c8_design_checkpoints() -> Outcome {
    let opts = SweepOptions::default();
    let mut ok = true;
    let mut parts = Vec::new();

    let mut b = SweepSpec::<f64>::inductance_area(41);
    b.y = Axis::linear(AxisName::InductiveEnergy, 0.24, 0.26, 3);
    let r = run_sweep(&b, &opts).unwrap();
    let mut min_large = f64::INFINITY;
    let mut monotone = true;
    for iy in 0..r.y.len() {
        let row: Vec<f64> = (0..r.x.len()).map(|ix| r.value(ix, iy).unwrap()).collect();
        monotone &= row.windows(2).all(|w| w[1] > w[0]);
        for (ix, &a) in r.x.iter().enumerate() {
            if a >= 0.7 {
                min_large = min_large.min(row[ix]);
            }
        }
    }
    ok &= min_large > 0.1 && monotone;
    parts.push(format!("E_L 0.24..0.26 GHz, a >= 0.7 um^2: min T {min_large:.3} s (> 0.1 s); monotone in a: {monotone}"));

    let c = SweepSpec::<f64>::count_current_density(61);
    let r = run_sweep(&c, &opts).unwrap();
    let values: Vec<f64> = r.cells.iter().filter_map(|c| c.value).collect();
    let below = values.iter().any(|&v| v < 1.0);
    let above = values.iter().any(|&v| v > 1.0);
    ok &= below && above;
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(0.0, f64::max);
    parts.push(format!(
        "N in [{}, {}], J_c in [{}, {}]: T spans {lo:.2e}..{hi:.2e} s, 1 s contour present: {}",
        c.x.min,
        c.x.max,
        c.y.min,
        c.y.max,
        below && above
    ));
    check(ok, parts.join("; "))
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 8] = [
        (1, "half-flux frequencies", c1_half_flux_frequencies),
        (2, "CQPS dephasing scaling", c2_cqps_scaling),
        (3, "phase-slip amplitude forms", c3_phase_slip_forms),
        (4, "central-limit spread", c4_central_limit),
        (5, "parity-noise PSD", c5_parity_psd),
        (6, "dephasing vs flux morphology", c6_dephasing_morphology),
        (7, "analysis closures", c7_analysis_closures),
        (8, "design-space checkpoints", c8_design_checkpoints),
    ];
    let mut unexpected = Vec::new();
    for (id, name, f) in criteria {
        let start = Instant::now();
        let o = f();
        let status = if o.pass { "PASS" } else { "FAIL" };
        let note = if !o.pass && DOCUMENTED_FAILURES.contains(&id) {
            " [documented]"
        } else {
            ""
        };
        println!("criterion {id} ({name}): {status}{note} | {} | {:.1?}", o.detail, start.elapsed());
        if !o.pass && note.is_empty() {
            unexpected.push(id);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("undocumented failures: {unexpected:?}");
        std::process::exit(1);
    }
}
