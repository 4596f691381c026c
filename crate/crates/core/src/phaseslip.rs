//! Phase-slip amplitudes of a single junction: the closed-form WKB estimate
//! and the Fourier decomposition of charge-qubit Bloch bands.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{plasma_frequency, reduced_impedance, JunctionParams};
use crate::error::{invalid, Error, Result};
use crate::numerics::tridiagonal_eigen;
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseSlipMethod {
    Wkb,
    BandFourier,
}

impl PhaseSlipMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            PhaseSlipMethod::Wkb => "wkb",
            PhaseSlipMethod::BandFourier => "band_fourier",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseSlipAmplitude<T> {
    /// Magnitude `ε_ps / h` in GHz.
    #[serde(rename = "eps_ps_GHz")]
    pub value: T,
    pub band: usize,
    /// Number of 2π slips `l >= 1`.
    pub order: usize,
    pub method: PhaseSlipMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WkbEstimate<T> {
    pub amplitude: PhaseSlipAmplitude<T>,
    /// Same quantity written through the reduced impedance `z`.
    pub impedance_form: T,
    pub reduced_impedance: T,
    /// Set when `E_J/E_C < 1`, where the semiclassical estimate is unreliable.
    pub below_validity: bool,
}

/// `ε = 2 sqrt(2/π) sqrt(8 E_J E_C) (8 E_J/E_C)^{1/4} exp(−sqrt(8 E_J/E_C))`.
pub fn wkb_amplitude<T: Real>(e_j: T, e_c: T) -> T {
    let r = T::lit(8.0) * e_j / e_c;
    T::lit(2.0) * (T::lit(2.0) / T::PI()).sqrt() * (T::lit(8.0) * e_j * e_c).sqrt() * r.sqrt().sqrt()
        * (-r.sqrt()).exp()
}

/// `ε = (4 sqrt 2 / π) ħω_p z^{-1/2} exp(−4/(π z))`.
pub fn impedance_amplitude<T: Real>(plasma_ghz: T, z: T) -> T {
    T::lit(4.0) * T::SQRT_2() / T::PI() * plasma_ghz / z.sqrt() * (-T::lit(4.0) / (T::PI() * z)).exp()
}

/// Cosine amplitude of the transmon ground band,
/// `4 sqrt(2/π) sqrt(8 E_C E_J) (2 E_C/E_J)^{-1/4} exp(−sqrt(8 E_J/E_C))`.
pub fn transmon_band_amplitude<T: Real>(e_j: T, e_c: T) -> T {
    T::lit(4.0) * (T::lit(2.0) / T::PI()).sqrt() * (T::lit(8.0) * e_c * e_j).sqrt()
        * (T::lit(2.0) * e_c / e_j).powf(T::lit(-0.25))
        * (-(T::lit(8.0) * e_j / e_c).sqrt()).exp()
}

pub fn wkb_phase_slip_energy<T: Real>(j: &JunctionParams<T>) -> Result<WkbEstimate<T>> {
    j.validate()?;
    let value = wkb_amplitude(j.e_j, j.e_c);
    let z = reduced_impedance(j);
    let impedance_form = impedance_amplitude(plasma_frequency(j), z);
    debug_assert!(
        ((impedance_form - value) / value).abs() < T::lit(1e3) * T::epsilon(),
        "closed forms disagree: {value} vs {impedance_form}"
    );
    Ok(WkbEstimate {
        amplitude: PhaseSlipAmplitude {
            value,
            band: 0,
            order: 1,
            method: PhaseSlipMethod::Wkb,
        },
        impedance_form,
        reduced_impedance: z,
        below_validity: j.ratio() < T::one(),
    })
}

/// Charge-qubit energies on the quasi-charge grid `k_i = −1/2 + i/n_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandStructure<T> {
    pub k: Vec<T>,
    /// `bands[b][i]`: energy of band `b` at `k[i]`, GHz.
    pub bands: Vec<Vec<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandConfig {
    pub n_k: usize,
    /// Odd number of charge states centred on zero.
    pub n_charge: usize,
    pub bands: usize,
}

impl Default for BandConfig {
    fn default() -> Self {
        Self {
            n_k: 201,
            n_charge: 41,
            bands: 3,
        }
    }
}

/// Bands of `4 E_C (n + k)^2 − E_J cos φ` in the charge basis.
pub fn charge_band_energies<T: Real>(j: &JunctionParams<T>, cfg: &BandConfig) -> Result<BandStructure<T>> {
    j.validate()?;
    charge_bands(j.e_j, j.e_c, cfg)
}

/// As [`charge_band_energies`] but accepting `E_J = 0` (free rotor).
pub fn charge_bands<T: Real>(e_j: T, e_c: T, cfg: &BandConfig) -> Result<BandStructure<T>> {
    if cfg.n_charge < 21 || cfg.n_charge % 2 == 0 {
        return Err(invalid("n_charge", format!("must be odd and >= 21, got {}", cfg.n_charge)));
    }
    if cfg.n_k < 32 {
        return Err(invalid("n_k", format!("must be >= 32, got {}", cfg.n_k)));
    }
    if cfg.bands == 0 || cfg.bands > cfg.n_charge / 2 {
        return Err(invalid("bands", "need 1 <= bands <= n_charge/2"));
    }
    if !(e_j >= T::zero() && e_j.is_finite()) {
        return Err(invalid("E_J_GHz", "must be finite and >= 0"));
    }
    crate::error::require_positive("E_C_GHz", e_c)?;

    let half = (cfg.n_charge / 2) as i64;
    let k: Vec<T> = (0..cfg.n_k)
        .map(|i| T::lit(-0.5) + T::from_usize_lossy(i) / T::from_usize_lossy(cfg.n_k))
        .collect();
    let off = vec![-e_j / T::lit(2.0); cfg.n_charge - 1];
    let per_k: Vec<Vec<T>> = k
        .par_iter()
        .map(|&kk| {
            let diag: Vec<T> = (-half..=half)
                .map(|n| {
                    let q = T::lit(n as f64) + kk;
                    T::lit(4.0) * e_c * q * q
                })
                .collect();
            let eig = tridiagonal_eigen(&diag, &off, cfg.bands, true)?;
            let top = eig
                .vectors
                .iter()
                .map(|v| (v[0] * v[0]).max(v[cfg.n_charge - 1] * v[cfg.n_charge - 1]))
                .fold(T::zero(), T::max);
            if top > T::lit(1e-10) {
                return Err(Error::ChargeBasisTooSmall { weight: top.as_f64() });
            }
            Ok(eig.values)
        })
        .collect::<Result<_>>()?;
    let bands = (0..cfg.bands)
        .map(|b| per_k.iter().map(|v| v[b]).collect())
        .collect();
    Ok(BandStructure { k, bands })
}

/// `ε(b, l) = 2 |c_l|` for `l = 1..=l_max`, where `c_l` is the `l`-th Fourier
/// coefficient of the band over one period (trapezoid rule on the uniform grid).
pub fn band_fourier_amplitudes<T: Real>(
    k: &[T],
    band: &[T],
    band_index: usize,
    l_max: usize,
) -> Result<Vec<PhaseSlipAmplitude<T>>> {
    let n = k.len();
    if n != band.len() {
        return Err(invalid("band", "length differs from k grid"));
    }
    if n < 4 {
        return Err(invalid("k", "need at least 4 samples"));
    }
    let spacing = T::one() / T::from_usize_lossy(n);
    let tol = T::lit(1e-9).max(T::lit(64.0) * T::epsilon());
    for w in k.windows(2) {
        if ((w[1] - w[0]) - spacing).abs() > tol {
            return Err(invalid("k", "grid must be uniform with n samples per unit period"));
        }
    }
    let inv_n = spacing;
    Ok((1..=l_max)
        .map(|l| {
            let (mut re, mut im) = (T::zero(), T::zero());
            for (&kk, &w) in k.iter().zip(band) {
                let arg = T::TAU() * T::from_usize_lossy(l) * kk;
                re = re + w * arg.cos();
                im = im - w * arg.sin();
            }
            let c = (re * re + im * im).sqrt() * inv_n;
            PhaseSlipAmplitude {
                value: T::lit(2.0) * c,
                band: band_index,
                order: l,
                method: PhaseSlipMethod::BandFourier,
            }
        })
        .collect())
}
