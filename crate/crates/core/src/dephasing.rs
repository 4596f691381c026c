//! Combined Ramsey dephasing: first-order 1/f flux noise plus CQPS, added in
//! quadrature, and the Gaussian decay envelope used to fit coherence traces.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::FluxoniumParams;
use crate::cqps::{rate_from_sigma, sigma_f_general, structure_factor_from};
use crate::error::{invalid, require_positive, Result};
use crate::spectrum::{eigensystem, flux_dispersion, transition_frequency, BasisConfig, GridSpec};
use crate::Real;

/// 1/f flux noise `S_Φ(ω) = A_Φ² (2π·1 Hz / |ω|)` seen through a filter
/// whose low-frequency integral contributes the factor `ξ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluxNoiseModel<T> {
    #[serde(rename = "A_phi_uPhi0_per_rtHz")]
    pub amplitude: T,
    pub filter_factor: T,
}

impl<T: Real> FluxNoiseModel<T> {
    /// Hahn echo, `ξ = ln 2`.
    pub fn echo(amplitude: T) -> Self {
        Self {
            amplitude,
            filter_factor: T::LN_2(),
        }
    }

    /// Ramsey with the fixed effective amplitude `A_R1 = 4 A_Φ sqrt(ln 2)`,
    /// i.e. `ξ = 16 ln 2`.
    pub fn ramsey(amplitude: T) -> Self {
        Self {
            amplitude,
            filter_factor: T::lit(16.0) * T::LN_2(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        require_positive("A_phi_uPhi0_per_rtHz", self.amplitude)?;
        require_positive("filter_factor", self.filter_factor)
    }
}

/// `Γ = 2π |df/dΦ| A_Φ sqrt(ξ)` in s⁻¹, with `df/dΦ` in GHz/Φ0 and `A_Φ`
/// in µΦ0/√Hz.
pub fn flux_dephasing_rate<T: Real>(model: &FluxNoiseModel<T>, dispersion_ghz_per_phi0: T) -> T {
    T::TAU() * dispersion_ghz_per_phi0.abs() * T::lit(1e9) * model.amplitude * T::lit(1e-6) * model.filter_factor.sqrt()
}

/// `A_R1 = 4 A_Φ sqrt(ln 2)`.
pub fn ramsey_flux_amplitude<T: Real>(a_phi: T) -> T {
    T::lit(4.0) * a_phi * T::LN_2().sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DephasingBudget<T> {
    pub gamma_cqps: T,
    pub gamma_flux: T,
    pub gamma_total: T,
    pub phi_ext: T,
    pub label: String,
}

/// Quadrature sum of the two channels.
pub fn total_ramsey_rate<T: Real>(cqps: T, flux: T) -> Result<DephasingBudget<T>> {
    if !(cqps >= T::zero() && flux >= T::zero()) {
        return Err(invalid("rates", "dephasing rates must be >= 0"));
    }
    Ok(DephasingBudget {
        gamma_cqps: cqps,
        gamma_flux: flux,
        gamma_total: cqps.hypot(flux),
        phi_ext: T::nan(),
        label: String::new(),
    })
}

impl<T: Real> DephasingBudget<T> {
    pub fn at(mut self, phi_ext: T, label: impl Into<String>) -> Self {
        self.phi_ext = phi_ext;
        self.label = label.into();
        self
    }
}

/// `e^{−t/2T1} e^{−(t/T_φ)²} cos(2π f t + φ0)`, times in µs and `f` in MHz.
pub fn gaussian_decay<T: Real>(t_us: T, t1_us: T, tphi_us: T, f_mhz: T, phase: T) -> T {
    (-t_us / (T::lit(2.0) * t1_us)).exp()
        * (-(t_us / tphi_us).powi(2)).exp()
        * (T::TAU() * f_mhz * t_us + phase).cos()
}

/// Everything needed to predict a qubit's Ramsey dephasing versus flux.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real"))]
pub struct QubitModel<T> {
    pub label: String,
    pub params: FluxoniumParams<T>,
    /// Phase-slip amplitude per array junction, GHz.
    #[serde(rename = "eps_ps_GHz")]
    pub epsilons: Vec<T>,
    pub flux_noise: FluxNoiseModel<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceRow<T> {
    pub phi_ext: T,
    #[serde(rename = "f01_GHz")]
    pub f01: T,
    #[serde(rename = "T_cqps_s")]
    pub t_cqps: T,
    #[serde(rename = "T_flux_s")]
    pub t_flux: T,
    #[serde(rename = "T_total_s")]
    pub t_total: T,
    #[serde(skip)]
    pub budget: Option<DephasingBudget<T>>,
}

/// Ramsey dephasing times over a flux grid (parallel over points, rows in
/// input order).
pub fn coherence_vs_flux<T: Real>(
    q: &QubitModel<T>,
    fluxes: &[T],
    basis: &BasisConfig,
    grid: &GridSpec,
    dispersion_step: T,
) -> Result<Vec<CoherenceRow<T>>> {
    q.params.validate()?;
    q.flux_noise.validate()?;
    if q.epsilons.is_empty() {
        return Err(invalid("eps_ps_GHz", "need at least one junction"));
    }
    fluxes
        .par_iter()
        .map(|&phi| {
            let p = q.params.at_flux(phi).with_offset_charge(T::zero());
            let sol = eigensystem(&p, basis, 2)?;
            let f01 = transition_frequency(&sol, 0, 1)?;
            let f = structure_factor_from(&sol, grid, 0, 1)?;
            let gamma_cqps = rate_from_sigma(sigma_f_general(&q.epsilons, &f));
            let slope = flux_dispersion(&p, &basis.unchecked(), 0, 1, dispersion_step)?;
            let gamma_flux = flux_dephasing_rate(&q.flux_noise, slope.value);
            let budget = total_ramsey_rate(gamma_cqps, gamma_flux)?.at(phi, q.label.clone());
            Ok(CoherenceRow {
                phi_ext: phi,
                f01,
                t_cqps: gamma_cqps.recip(),
                t_flux: gamma_flux.recip(),
                t_total: budget.gamma_total.recip(),
                budget: Some(budget),
            })
        })
        .collect()
}
