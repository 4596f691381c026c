//! First-order coherent-quantum-phase-slip shifts of the fluxonium levels.
//!
//! Each array junction `j` contributes a fluxon-tunnelling amplitude
//! `ε_j e^{−2πi η_j}`, where `η_j` is the offset charge accumulated on the
//! islands between the small junction and junction `j`. The qubit frequency
//! moves by `Re[E_CQPS F_01]` with `E_CQPS = Σ_j ε_j e^{−2πi η_j}` and
//! `F_01` the difference of the 2π-displacement overlaps of the two levels.

use num_complex::Complex;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{ArraySpec, FluxoniumParams};
use crate::error::{invalid, Error, Result};
use crate::numerics::RngSeed;
use crate::phaseslip::wkb_phase_slip_energy;
use crate::spectrum::{eigensystem, wavefunctions_on_grid, BasisConfig, EigenSolution, GridSpec, PhaseGrid};
use crate::Real;

/// Island offset charges `n_{g,0..=N}` in Cooper pairs, each in `[0, 1)`.
/// Island 0 is the small-junction island.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChargeConfiguration<T> {
    offsets: Vec<T>,
}

impl<T: Real> ChargeConfiguration<T> {
    pub fn new(offsets: Vec<T>) -> Result<Self> {
        if offsets.is_empty() {
            return Err(invalid("offsets", "need at least the small-junction island"));
        }
        if let Some((i, v)) = offsets
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v >= T::zero() && **v < T::one()))
        {
            return Err(invalid(format!("offsets[{i}]"), format!("must lie in [0, 1), got {v}")));
        }
        Ok(Self { offsets })
    }

    /// Reduces arbitrary real charges modulo one.
    pub fn wrapped(raw: &[T]) -> Result<Self> {
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(invalid("offsets", "must be finite"));
        }
        Self::new(raw.iter().map(|&v| wrap_unit(v)).collect())
    }

    pub fn zeros(junctions: usize) -> Self {
        Self {
            offsets: vec![T::zero(); junctions + 1],
        }
    }

    /// Independent uniform offsets on `junctions + 1` islands.
    pub fn uniform_random<R: Rng + ?Sized>(junctions: usize, rng: &mut R) -> Self {
        Self {
            offsets: (0..=junctions).map(|_| T::lit(rng.gen::<f64>())).collect(),
        }
    }

    pub fn offsets(&self) -> &[T] {
        &self.offsets
    }

    /// Number of array junctions `N`.
    pub fn junctions(&self) -> usize {
        self.offsets.len() - 1
    }

    /// FNV-1a digest of the offset bit patterns (as `f64`).
    pub fn digest(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in &self.offsets {
            for byte in v.as_f64().to_bits().to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }
}

/// `x mod 1` in `[0, 1)`.
pub fn wrap_unit<T: Real>(x: T) -> T {
    let r = x - x.floor();
    // `x - floor(x)` can round up to exactly 1 for tiny negative x.
    if r >= T::one() {
        T::zero()
    } else {
        r
    }
}

/// `η_j = Σ_{k<j} n_{g,k} mod 1` for junctions `j = 1..=N`.
pub fn aggregated_phases<T: Real>(cfg: &ChargeConfiguration<T>) -> Vec<T> {
    let mut eta = T::zero();
    cfg.offsets[..cfg.junctions()]
        .iter()
        .map(|&n| {
            eta = wrap_unit(eta + n);
            eta
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CqpsEnergy<T> {
    /// `E_CQPS / h` in GHz.
    pub value: Complex<T>,
    pub configuration: u64,
    pub epsilons: Vec<T>,
}

/// `E_CQPS = Σ_j ε_j e^{−2πi η_j}`.
pub fn total_cqps_energy<T: Real>(eps: &[T], cfg: &ChargeConfiguration<T>) -> Result<CqpsEnergy<T>> {
    if eps.len() != cfg.junctions() {
        return Err(invalid(
            "eps",
            format!("{} amplitudes for {} junctions", eps.len(), cfg.junctions()),
        ));
    }
    let value = aggregated_phases(cfg)
        .into_iter()
        .zip(eps)
        .fold(Complex::new(T::zero(), T::zero()), |acc, (eta, &e)| {
            let (s, c) = (T::TAU() * eta).sin_cos();
            acc + Complex::new(e * c, -e * s)
        });
    Ok(CqpsEnergy {
        value,
        configuration: cfg.digest(),
        epsilons: eps.to_vec(),
    })
}

/// Trapezoid `∫ ψ_α(φ) ψ_α(φ − 2π) dφ`; the displaced function is taken as
/// zero where it would be sampled left of the grid.
pub fn displacement_overlap<T: Real>(grid: &PhaseGrid<T>, level: usize) -> Result<T> {
    let psi = grid
        .values
        .get(level)
        .ok_or_else(|| invalid("level", format!("level {level} not on grid")))?;
    let shift = grid.spec.steps_per_period();
    let fine = shifted_trapezoid(psi, 1, shift, grid.step());
    let coarse = shifted_trapezoid(psi, 2, shift / 2, grid.step() * T::lit(2.0));
    let change = (fine - coarse).abs();
    if change > T::lit(1e-6).max(T::lit(1e3) * T::epsilon()) {
        return Err(Error::GridTooCoarse { change: change.as_f64() });
    }
    Ok(fine)
}

fn shifted_trapezoid<T: Real>(psi: &[T], stride: usize, shift: usize, h: T) -> T {
    let m = (psi.len() - 1) / stride;
    let at = |j: usize| psi[j * stride];
    let inner: T = (shift.max(1)..m).map(|j| at(j) * at(j - shift)).sum();
    (inner + at(m) * at(m - shift) / T::lit(2.0)) * h
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructureFactor<T> {
    pub value: Complex<T>,
    pub levels: (usize, usize),
    pub flux: T,
}

impl<T: Real> StructureFactor<T> {
    pub fn magnitude(&self) -> T {
        self.value.norm()
    }

    pub fn real(value: T, levels: (usize, usize), flux: T) -> Self {
        Self {
            value: Complex::new(value, T::zero()),
            levels,
            flux,
        }
    }
}

/// `F_αβ = <ψ_β|m⁺|ψ_β> − <ψ_α|m⁺|ψ_α>` with the default basis and grid.
pub fn structure_factor<T: Real>(p: &FluxoniumParams<T>, alpha: usize, beta: usize) -> Result<StructureFactor<T>> {
    structure_factor_with(p, &BasisConfig::default(), &GridSpec::default(), alpha, beta)
}

pub fn structure_factor_with<T: Real>(
    p: &FluxoniumParams<T>,
    basis: &BasisConfig,
    grid: &GridSpec,
    alpha: usize,
    beta: usize,
) -> Result<StructureFactor<T>> {
    if alpha == beta {
        return Err(invalid("beta", "levels must differ"));
    }
    let k = alpha.max(beta) + 1;
    // The overlap is gauge-covariant: an offset charge n_g only multiplies it
    // by e^{−2πi n_g}, so the eigenproblem is solved at n_g = 0.
    let sol = eigensystem(&p.with_offset_charge(T::zero()), basis, k.max(2))?;
    let mut f = structure_factor_from(&sol, grid, alpha, beta)?;
    let (s, c) = (T::TAU() * p.offset_charge).sin_cos();
    f.value = f.value * Complex::new(c, -s);
    Ok(f)
}

/// Structure factor of an existing `n_g = 0` solution.
pub fn structure_factor_from<T: Real>(
    sol: &EigenSolution<T>,
    grid: &GridSpec,
    alpha: usize,
    beta: usize,
) -> Result<StructureFactor<T>> {
    if alpha == beta {
        return Err(invalid("beta", "levels must differ"));
    }
    let wf = wavefunctions_on_grid(sol, grid)?;
    let diff = displacement_overlap(&wf, beta)? - displacement_overlap(&wf, alpha)?;
    Ok(StructureFactor::real(diff, (alpha, beta), sol.params.flux))
}

/// `δf = Re[E_CQPS F]` in GHz.
pub fn frequency_shift<T: Real>(e: &CqpsEnergy<T>, f: &StructureFactor<T>) -> T {
    (e.value * f.value).re
}

/// `σ_f = sqrt(N/2) ε |F|` (GHz) for a homogeneous array.
pub fn sigma_f<T: Real>(n: usize, eps: T, f: &StructureFactor<T>) -> T {
    (T::from_usize_lossy(n) / T::lit(2.0)).sqrt() * eps * f.magnitude()
}

/// `σ_f = sqrt(Σ ε_j² / 2) |F|` for per-junction amplitudes.
pub fn sigma_f_general<T: Real>(eps: &[T], f: &StructureFactor<T>) -> T {
    (eps.iter().map(|&e| e * e).sum::<T>() / T::lit(2.0)).sqrt() * f.magnitude()
}

/// Gaussian Ramsey dephasing rate `sqrt 2 π σ_f` in s⁻¹ from `σ_f` in GHz.
pub fn rate_from_sigma<T: Real>(sigma_ghz: T) -> T {
    T::SQRT_2() * T::PI() * sigma_ghz * T::lit(1e9)
}

/// `Γ = π sqrt(N) ε |F|` in s⁻¹ (`ε` in GHz).
pub fn cqps_dephasing_rate<T: Real>(n: usize, eps: T, f: &StructureFactor<T>) -> T {
    T::PI() * T::from_usize_lossy(n).sqrt() * eps * T::lit(1e9) * f.magnitude()
}

/// Phase-slip amplitude of every array junction (override or the WKB value).
pub fn junction_epsilons<T: Real>(array: &ArraySpec<T>) -> Result<Vec<T>> {
    array.validate()?;
    if let Some(eps) = &array.epsilon_override {
        return Ok(eps.clone());
    }
    let eps = wkb_phase_slip_energy(&array.junction_params()?)?.amplitude.value;
    Ok(vec![eps; array.count])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CqpsRateRow<T> {
    pub phi_ext: T,
    #[serde(rename = "F01_abs")]
    pub f01_abs: T,
    #[serde(rename = "sigma_f_Hz")]
    pub sigma_f_hz: T,
    pub gamma_cqps_per_s: T,
    #[serde(rename = "T_cqps_s")]
    pub t_cqps_s: T,
}

/// CQPS linewidth and rate of the 0–1 transition over a flux grid.
pub fn cqps_rate_sweep<T: Real>(
    p: &FluxoniumParams<T>,
    eps: &[T],
    fluxes: &[T],
    basis: &BasisConfig,
    grid: &GridSpec,
) -> Result<Vec<CqpsRateRow<T>>> {
    if eps.is_empty() {
        return Err(invalid("eps", "need at least one junction"));
    }
    fluxes
        .par_iter()
        .map(|&phi| {
            let f = structure_factor_with(&p.at_flux(phi), basis, grid, 0, 1)?;
            let sigma = sigma_f_general(eps, &f);
            let gamma = rate_from_sigma(sigma);
            Ok(CqpsRateRow {
                phi_ext: phi,
                f01_abs: f.magnitude(),
                sigma_f_hz: sigma * T::lit(1e9),
                gamma_cqps_per_s: gamma,
                t_cqps_s: gamma.recip(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyStatistics {
    pub samples: usize,
    pub mean_re: f64,
    pub std_re: f64,
    pub mean_im: f64,
    pub std_im: f64,
}

/// Sample statistics of `E_CQPS` over independent uniform configurations.
///
/// Draws are split into fixed blocks, each with its own RNG stream, so the
/// result does not depend on the thread count.
pub fn sample_cqps_energy<T: Real>(eps: &[T], samples: usize, seed: RngSeed) -> Result<EnergyStatistics> {
    if samples < 2 {
        return Err(invalid("samples", "need at least 2 draws"));
    }
    const BLOCK: usize = 4096;
    let blocks = samples.div_ceil(BLOCK);
    let partial: Vec<[f64; 4]> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = seed.stream(b as u64);
            let count = BLOCK.min(samples - b * BLOCK);
            let mut acc = [0.0f64; 4];
            for _ in 0..count {
                let cfg = ChargeConfiguration::<T>::uniform_random(eps.len(), &mut rng);
                let e = total_cqps_energy(eps, &cfg)?.value;
                let (re, im) = (e.re.as_f64(), e.im.as_f64());
                acc[0] += re;
                acc[1] += re * re;
                acc[2] += im;
                acc[3] += im * im;
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut tot = [0.0f64; 4];
    for p in &partial {
        for (t, v) in tot.iter_mut().zip(p) {
            *t += v;
        }
    }
    let n = samples as f64;
    let var = |s: f64, s2: f64| ((s2 - s * s / n) / (n - 1.0)).max(0.0);
    Ok(EnergyStatistics {
        samples,
        mean_re: tot[0] / n,
        std_re: var(tot[0], tot[1]).sqrt(),
        mean_im: tot[2] / n,
        std_im: var(tot[2], tot[3]).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_charges_add_coherently() {
        let e = total_cqps_energy(&[2e-4f64; 85], &ChargeConfiguration::zeros(85)).unwrap();
        assert!((e.value.re - 85.0 * 2e-4).abs() < 1e-15);
        assert_eq!(e.value.im, 0.0);
    }

    #[test]
    fn half_charge_flips_sign() {
        let cfg = ChargeConfiguration::new(vec![0.5f64, 0.0]).unwrap();
        let e = total_cqps_energy(&[1.0], &cfg).unwrap();
        assert!((e.value.re + 1.0).abs() < 1e-15 && e.value.im.abs() < 1e-15);
    }

    #[test]
    fn length_mismatch() {
        assert!(total_cqps_energy(&[1.0f64; 3], &ChargeConfiguration::zeros(4)).is_err());
        assert!(ChargeConfiguration::new(vec![0.2f64, 1.0]).is_err());
    }

    #[test]
    fn phases_accumulate() {
        let cfg = ChargeConfiguration::new(vec![0.25f64, 0.5, 0.5, 0.9]).unwrap();
        let eta = aggregated_phases(&cfg);
        let want = [0.25, 0.75, 0.25];
        for (a, b) in eta.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn frequency_shift_products() {
        let f = StructureFactor::real(-0.9f64, (0, 1), 0.5);
        let e = CqpsEnergy { value: Complex::new(2.0, 0.0), configuration: 0, epsilons: vec![] };
        assert!((frequency_shift(&e, &f) + 1.8).abs() < 1e-15);
        let e = CqpsEnergy { value: Complex::new(0.0, 3.0), configuration: 0, epsilons: vec![] };
        assert_eq!(frequency_shift(&e, &f), 0.0);
    }

    #[test]
    fn sigma_scaling() {
        let f = StructureFactor::real(1.0f64, (0, 1), 0.5);
        assert!((sigma_f(2, 1.0, &f) - 1.0).abs() < 1e-15);
        assert!((sigma_f(40, 0.3f64, &f) * 2.0 - sigma_f(160, 0.3, &f)).abs() < 1e-14);
        assert!((sigma_f_general(&[0.3; 40], &f) - sigma_f(40, 0.3, &f)).abs() < 1e-14);
        let g = cqps_dephasing_rate(85, 1e-4, &f);
        assert!((g - rate_from_sigma(sigma_f(85, 1e-4, &f))).abs() < 1e-6 * g);
    }

    #[test]
    fn harmonic_overlap_matches_gaussian_integral() {
        // Ground state of the oscillator, Gaussian of width φ_zpf:
        // ∫ψ(φ)ψ(φ−2π) = exp(−(2π)² / (8 φ_zpf²)).
        let p = FluxoniumParams::new(1e-12, 1.4, 0.25).unwrap().at_flux(0.5);
        let sol = eigensystem(&p, &BasisConfig::default(), 2).unwrap();
        let grid = wavefunctions_on_grid(&sol, &GridSpec::default()).unwrap();
        let zpf = p.phase_zpf();
        let want = (-(std::f64::consts::TAU.powi(2)) / (8.0 * zpf * zpf)).exp();
        assert!((displacement_overlap(&grid, 0).unwrap() - want).abs() < 1e-10);
    }

    #[test]
    fn tight_well_kills_overlap() {
        let mut prev = 1.0f64;
        for e_l in [1.0f64, 4.0, 16.0, 40.0] {
            let p = FluxoniumParams::new(1e-12, 1.0, e_l).unwrap();
            let sol = eigensystem(&p, &BasisConfig::default(), 2).unwrap();
            let grid = wavefunctions_on_grid(&sol, &GridSpec::default()).unwrap();
            let ov = displacement_overlap(&grid, 0).unwrap();
            assert!(ov < prev);
            prev = ov;
        }
        assert!(prev < 1e-9);
    }

    #[test]
    fn offset_charge_rotates_structure_factor() {
        let p = FluxoniumParams::new(3.2f64, 1.4, 0.25).unwrap().at_flux(0.5);
        let f0 = structure_factor(&p, 0, 1).unwrap();
        let fq = structure_factor(&p.with_offset_charge(0.25), 0, 1).unwrap();
        assert!(f0.value.im == 0.0);
        assert!((fq.magnitude() - f0.magnitude()).abs() < 1e-12);
        assert!((fq.value.im + f0.value.re).abs() < 1e-12);
    }

    #[test]
    fn monte_carlo_is_reproducible() {
        let eps = vec![1.0f64; 10];
        let a = sample_cqps_energy(&eps, 5000, RngSeed(7)).unwrap();
        let b = sample_cqps_energy(&eps, 5000, RngSeed(7)).unwrap();
        assert_eq!(a, b);
        assert!((a.std_re / 5f64.sqrt() - 1.0).abs() < 0.05);
    }
}
