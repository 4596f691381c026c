use cqps_core::analysis::{
    fit_power_law, fit_ramsey, flux_amplitude_from_psd, frequency_psd, synthetic_flux_noise_series, synthetic_power_law,
    synthetic_ramsey, synthetic_white, RamseyFitOptions, RamseyTruth,
};
use cqps_core::numerics::{periodogram, RngSeed};
use cqps_core::paritysim::{run, SimConfig};

const SEEDS: u64 = 20;

#[test]
fn power_law_generator_and_estimator_close_over_seeds() {
    let (n, dt) = (4096, 0.5f64);
    let mut mus = Vec::new();
    for s in 0..SEEDS {
        let psd = periodogram(&synthetic_power_law(n, dt, 2.0, 1.0, RngSeed(s)).unwrap(), dt).unwrap();
        let fit = fit_power_law(&psd, (1e-3, 1.0)).unwrap();
        assert!((fit.mu - 1.0).abs() < 0.15, "seed {s}: mu {}", fit.mu);
        mus.push(fit.mu);
    }
    let mean = mus.iter().sum::<f64>() / mus.len() as f64;
    assert!((mean - 1.0).abs() < 0.03, "mean mu {mean}");
}

#[test]
fn white_generator_is_flat_over_seeds() {
    let (n, dt) = (4096, 0.01f64);
    for s in 0..SEEDS {
        let psd = periodogram(&synthetic_white(n, dt, 3.0, RngSeed(1000 + s)).unwrap(), dt).unwrap();
        let fit = fit_power_law(&psd, (0.1, 50.0)).unwrap();
        assert!(fit.mu.abs() < 0.15, "seed {s}: mu {}", fit.mu);
        assert!((fit.m / 3.0 - 1.0).abs() < 0.15, "seed {s}: level {}", fit.m);
    }
}

#[test]
fn ramsey_fit_closes_over_seeds() {
    let truth = RamseyTruth {
        t1_us: 120.0,
        t_phi_us: 2.16,
        freq_mhz: 3.0,
        phase: -0.4,
        amplitude: 0.4,
        offset: 0.5,
    };
    let delays: Vec<f64> = (0..150).map(|i| i as f64 * 0.04).collect();
    for s in 0..SEEDS {
        let trace = synthetic_ramsey(delays.clone(), &truth, 0.01, &mut RngSeed(s).rng()).unwrap();
        let fit = fit_ramsey(&trace, &RamseyFitOptions::default()).unwrap();
        assert!((fit.t_phi / truth.t_phi_us - 1.0).abs() < 0.05, "seed {s}: {}", fit.t_phi);
        assert!((fit.freq / truth.freq_mhz - 1.0).abs() < 0.01, "seed {s}: {}", fit.freq);
    }
}

#[test]
fn flux_amplitude_closes_over_seeds() {
    let (n, dt, d) = (8192, 58.0, 4.0);
    let mut recovered = Vec::new();
    for s in 0..SEEDS {
        let series = synthetic_flux_noise_series(n, dt, 3.35, d, 412.0, RngSeed(s)).unwrap();
        let psd = frequency_psd(&series).unwrap();
        // Fix the level at unit exponent over the measured band.
        let band: Vec<(f64, f64)> = psd
            .frequencies
            .iter()
            .zip(&psd.values)
            .skip(1)
            .map(|(&f, &v)| (f, v))
            .collect();
        let m = band.iter().map(|(f, v)| v * f).sum::<f64>() / band.len() as f64;
        recovered.push(flux_amplitude_from_psd(m, d).unwrap());
    }
    let mean = recovered.iter().sum::<f64>() / recovered.len() as f64;
    assert!((mean / 3.35 - 1.0).abs() < 0.05, "mean {mean}");
}

fn short_parity_config(realizations: usize) -> SimConfig<f64> {
    SimConfig {
        islands: 12,
        n_qp: 3,
        tau_qp: 0.01,
        dt: 1e-3,
        duration: 20.0,
        realizations,
        seed: RngSeed(17),
        ..SimConfig::paper_fig5()
    }
}

/// Mean squared difference of log PSD between adjacent bins.
fn roughness(values: &[f64]) -> f64 {
    let logs: Vec<f64> = values.iter().skip(1).map(|v| v.ln()).collect();
    logs.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum::<f64>() / (logs.len() - 1) as f64
}

#[test]
fn averaging_realizations_reduces_variance() {
    let r = run(&short_parity_config(8)).unwrap();
    let single = roughness(&r.realization_psds[0]);
    let averaged = roughness(&r.psd.values);
    // Independent exponential bins give 2·π²/6 for one record and about
    // 2·ψ'(8) ≈ 0.27 for eight.
    assert!(single > 2.5, "{single}");
    assert!(averaged < 0.4, "{averaged}");
}

#[test]
fn parity_run_is_thread_count_independent() {
    let cfg = short_parity_config(3);
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| run(&cfg).unwrap());
    let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap().install(|| run(&cfg).unwrap());
    assert_eq!(one.psd.values, three.psd.values);
    assert_eq!(one.trace, three.trace);
}
