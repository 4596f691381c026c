//! One-sided power spectral densities via the Wiener–Khinchin route
//! (squared magnitude of the DFT of the mean-removed series).

use num_complex::Complex;
use realfft::RealFftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, require_positive, Result};
use crate::Real;

/// How a [`SpectralDensity`] was obtained; power-law fits use this to correct
/// the log-bias of periodogram estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Estimator {
    /// Raw periodogram, or the mean of `averages` independent periodograms.
    Periodogram { averages: usize },
    /// Deterministic curve (model evaluation, test fixture).
    Model,
}

/// One-sided PSD samples on a uniform frequency grid starting at DC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralDensity<T> {
    pub frequencies: Vec<T>,
    pub values: Vec<T>,
    /// Sampling interval of the source series (s).
    pub sample_interval: T,
    /// Length of the source series before zero-padding.
    pub samples: usize,
    /// Transform length after zero-padding to a 5-smooth size.
    pub padded_len: usize,
    pub estimator: Estimator,
}

impl<T: Real> SpectralDensity<T> {
    /// Wraps model values; frequencies need not be uniform.
    pub fn model(frequencies: Vec<T>, values: Vec<T>) -> Result<Self> {
        if frequencies.len() != values.len() {
            return Err(invalid("values", "length differs from frequency grid"));
        }
        Ok(Self {
            samples: frequencies.len(),
            padded_len: frequencies.len(),
            frequencies,
            values,
            sample_interval: T::zero(),
            estimator: Estimator::Model,
        })
    }

    /// Grid spacing (Hz).
    pub fn resolution(&self) -> T {
        T::one() / (T::from_usize_lossy(self.padded_len) * self.sample_interval)
    }

    /// Integral of the PSD over all bins (rectangle rule); equals the series
    /// variance for periodogram estimates.
    pub fn total_power(&self) -> T {
        self.values.iter().copied().sum::<T>() * self.resolution()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Averages power within logarithmically spaced frequency bins (DC dropped).
    /// Bin centres are geometric means of the member frequencies.
    pub fn log_binned(&self, bins_per_decade: usize) -> Vec<(T, T)> {
        let mut out = Vec::new();
        let per = T::from_usize_lossy(bins_per_decade.max(1));
        let mut current: Option<i64> = None;
        let (mut log_f, mut sum, mut count) = (T::zero(), T::zero(), 0usize);
        for (&f, &s) in self.frequencies.iter().zip(&self.values) {
            if f <= T::zero() {
                continue;
            }
            let bin = (f.log10() * per).floor().to_i64().unwrap_or(i64::MIN);
            if current != Some(bin) {
                if count > 0 {
                    let n = T::from_usize_lossy(count);
                    out.push((T::lit(10.0).powf(log_f / n), sum / n));
                }
                current = Some(bin);
                log_f = T::zero();
                sum = T::zero();
                count = 0;
            }
            log_f = log_f + f.log10();
            sum = sum + s;
            count += 1;
        }
        if count > 0 {
            let n = T::from_usize_lossy(count);
            out.push((T::lit(10.0).powf(log_f / n), sum / n));
        }
        out
    }
}

/// One-sided periodogram of `x` sampled every `dt` seconds.
///
/// The mean is removed, the series is zero-padded to the next 5-smooth length and
/// `S_k = dt |X_k|^2 / len` is folded onto non-negative frequencies, so that
/// `sum(S) * df` equals the variance of `x`.
pub fn periodogram<T: Real>(x: &[T], dt: T) -> Result<SpectralDensity<T>> {
    periodogram_owned(x.to_vec(), dt)
}

/// [`periodogram`] reusing the caller's buffer as FFT workspace.
pub fn periodogram_owned<T: Real>(mut x: Vec<T>, dt: T) -> Result<SpectralDensity<T>> {
    let len = x.len();
    if len < 4 {
        return Err(invalid("x", format!("need at least 4 samples, got {len}")));
    }
    require_positive("dt", dt)?;
    let n = T::from_usize_lossy(len);
    let mean = x.iter().copied().sum::<T>() / n;
    for v in x.iter_mut() {
        *v = *v - mean;
    }
    let padded = fast_len(len);
    x.resize(padded, T::zero());

    let mut planner = RealFftPlanner::<T>::new();
    let fft = planner.plan_fft_forward(padded);
    let mut spectrum = fft.make_output_vec();
    fft.process(&mut x, &mut spectrum)
        .expect("buffer lengths match the plan");
    drop(x);

    let scale = dt / n;
    let two = T::lit(2.0);
    let nyquist = padded / 2;
    let values: Vec<T> = spectrum
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let p = c.norm_sqr() * scale;
            if k == 0 || (padded % 2 == 0 && k == nyquist) {
                p
            } else {
                two * p
            }
        })
        .collect();
    let df = T::one() / (T::from_usize_lossy(padded) * dt);
    let frequencies = (0..values.len())
        .map(|k| T::from_usize_lossy(k) * df)
        .collect();
    Ok(SpectralDensity {
        frequencies,
        values,
        sample_interval: dt,
        samples: len,
        padded_len: padded,
        estimator: Estimator::Periodogram { averages: 1 },
    })
}

/// Smallest `2^a 3^b 5^c` that is `>= n`; transforms of these lengths stay on
/// the fast mixed-radix path.
pub fn fast_len(n: usize) -> usize {
    let mut best = n.max(1).next_power_of_two();
    let mut p5 = 1usize;
    while p5 < best {
        let mut p35 = p5;
        while p35 < best {
            let mut m = p35;
            while m < n {
                m *= 2;
            }
            best = best.min(m);
            p35 *= 3;
        }
        p5 *= 5;
    }
    best
}

/// Bin-wise mean of periodograms computed on identical grids.
pub fn average_spectra<T: Real>(spectra: &[SpectralDensity<T>]) -> Result<SpectralDensity<T>> {
    let first = spectra
        .first()
        .ok_or_else(|| invalid("spectra", "nothing to average"))?;
    let mut values = vec![T::zero(); first.len()];
    let mut averages = 0;
    for s in spectra {
        if s.len() != first.len() || s.padded_len != first.padded_len {
            return Err(invalid("spectra", "frequency grids differ"));
        }
        for (acc, &v) in values.iter_mut().zip(&s.values) {
            *acc = *acc + v;
        }
        averages += match s.estimator {
            Estimator::Periodogram { averages } => averages,
            Estimator::Model => 1,
        };
    }
    let n = T::from_usize_lossy(spectra.len());
    for v in values.iter_mut() {
        *v = *v / n;
    }
    Ok(SpectralDensity {
        values,
        estimator: Estimator::Periodogram { averages },
        ..first.clone()
    })
}

/// Biased autocorrelation `r_k = (1/len) sum_i x_i x_{i+k}` of the
/// mean-removed series for lags `0..len`, computed by FFT.
pub fn autocorrelation<T: Real>(x: &[T]) -> Result<Vec<T>> {
    let len = x.len();
    if len < 2 {
        return Err(invalid("x", "need at least 2 samples"));
    }
    let n = T::from_usize_lossy(len);
    let mean = x.iter().copied().sum::<T>() / n;
    let padded = (2 * len).next_power_of_two();
    let mut buf: Vec<T> = x.iter().map(|&v| v - mean).collect();
    buf.resize(padded, T::zero());

    let mut planner = RealFftPlanner::<T>::new();
    let fwd = planner.plan_fft_forward(padded);
    let inv = planner.plan_fft_inverse(padded);
    let mut spec = fwd.make_output_vec();
    fwd.process(&mut buf, &mut spec).expect("plan length");
    for c in spec.iter_mut() {
        *c = Complex::new(c.norm_sqr(), T::zero());
    }
    let mut out = inv.make_output_vec();
    inv.process(&mut spec, &mut out).expect("plan length");
    let norm = T::from_usize_lossy(padded) * n;
    out.truncate(len);
    Ok(out.into_iter().map(|v| v / norm).collect())
}

/// Real series of length `n` whose DFT coefficients on bins `0..=n/2` are
/// `coefficients` (unnormalized inverse real FFT).
pub fn inverse_real_dft<T: Real>(mut coefficients: Vec<Complex<T>>, n: usize) -> Result<Vec<T>> {
    if coefficients.len() != n / 2 + 1 {
        return Err(invalid("coefficients", "need n/2 + 1 bins"));
    }
    // Bins that must be real for a real signal.
    coefficients[0].im = T::zero();
    if n % 2 == 0 {
        coefficients[n / 2].im = T::zero();
    }
    let mut planner = RealFftPlanner::<T>::new();
    let inv = planner.plan_fft_inverse(n);
    let mut out = inv.make_output_vec();
    inv.process(&mut coefficients, &mut out)
        .expect("plan length");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_series_has_no_power() {
        let psd = periodogram(&[3.5f64; 64], 0.1).unwrap();
        assert!(psd.values.iter().all(|&v| v.abs() < 1e-24));
    }

    #[test]
    fn bin_centred_sinusoid_is_one_line() {
        let n = 256;
        let dt = 1e-3;
        let bin = 17;
        let x: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * bin as f64 * i as f64 / n as f64).sin())
            .collect();
        let psd = periodogram(&x, dt).unwrap();
        let total: f64 = psd.values.iter().sum();
        assert!((psd.values[bin] / total - 1.0).abs() < 1e-12);
        assert!((psd.frequencies[bin] - bin as f64 / (n as f64 * dt)).abs() < 1e-9);
    }

    #[test]
    fn parseval_with_padding() {
        let x: Vec<f64> = (0..1001).map(|i| ((i * 7919) % 113) as f64 * 0.01).collect();
        let psd = periodogram(&x, 0.5).unwrap();
        assert_eq!(psd.padded_len, 1024);
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / x.len() as f64;
        assert!((psd.total_power() / var - 1.0).abs() < 1e-10);
    }

    #[test]
    fn fast_lengths() {
        assert_eq!(fast_len(1), 1);
        assert_eq!(fast_len(7), 8);
        assert_eq!(fast_len(1000), 1000);
        assert_eq!(fast_len(1001), 1024);
        assert_eq!(fast_len(20_000_000), 20_000_000);
        assert_eq!(fast_len(121), 125);
    }

    #[test]
    fn parseval_odd_transform() {
        let x: Vec<f64> = (0..121).map(|i| ((i * 31) % 17) as f64).collect();
        let psd = periodogram(&x, 1.0).unwrap();
        assert_eq!(psd.padded_len, 125);
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / x.len() as f64;
        assert!((psd.total_power() / var - 1.0).abs() < 1e-10);
    }

    #[test]
    fn rejects_short_series() {
        assert!(periodogram(&[1.0f64, 2.0, 3.0], 1.0).is_err());
        assert!(periodogram(&[1.0f64; 8], 0.0).is_err());
    }

    #[test]
    fn psd_is_transform_of_autocorrelation() {
        // Unpadded length so the two routes share a grid.
        let x: Vec<f64> = (0..128).map(|i| ((i as f64) * 0.37).sin() + 0.1 * (i % 5) as f64).collect();
        let dt = 0.25;
        let psd = periodogram(&x, dt).unwrap();
        let r = autocorrelation(&x).unwrap();
        let n = x.len();
        for k in [0usize, 3, 10, 40, 64] {
            // S(f_k) = dt * sum_{lag} r(lag) e^{-2 pi i k lag / n}, two-sided, folded.
            let mut acc = r[0];
            for lag in 1..n {
                acc += 2.0 * r[lag] * (2.0 * std::f64::consts::PI * (k * lag) as f64 / n as f64).cos();
            }
            let mut expect = dt * acc;
            if k != 0 && k != n / 2 {
                expect *= 2.0;
            }
            assert!((psd.values[k] - expect).abs() < 1e-9 * (1.0 + expect.abs()), "bin {k}");
        }
    }

    #[test]
    fn log_binning_preserves_flat_level() {
        let f: Vec<f64> = (0..1000).map(|k| k as f64 * 0.01).collect();
        let s = SpectralDensity::model(f, vec![2.0; 1000]).unwrap();
        for (_, v) in s.log_binned(10) {
            assert!((v - 2.0).abs() < 1e-12);
        }
    }
}
