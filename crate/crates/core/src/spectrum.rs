//! Fluxonium spectrum in the harmonic-oscillator basis of the inductive mode.
//!
//! With `θ = φ + 2πΦ_ext` the Hamiltonian is
//! `ω (a†a + 1/2) − E_J [cos(2πΦ_ext) cos θ + sin(2πΦ_ext) sin θ]`,
//! `ω = sqrt(8 E_C E_L)`, `θ = φ_zpf (a + a†)`. The matrix elements of
//! `cos θ`, `sin θ` follow from the oscillator displacement operator and are
//! exact; the only approximation is basis truncation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::FluxoniumParams;
use crate::error::{invalid, Error, Result};
use crate::numerics::{symmetric_eigen, symmetric_eigenvalues, SymmetricMatrix};
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisConfig {
    pub dimension: usize,
    /// Re-diagonalize at twice the dimension and fail if any retained level
    /// moves by more than `tolerance_ghz`.
    pub check_convergence: bool,
    pub tolerance_ghz: f64,
}

impl Default for BasisConfig {
    fn default() -> Self {
        Self {
            dimension: 150,
            check_convergence: true,
            tolerance_ghz: 1e-6,
        }
    }
}

impl BasisConfig {
    pub const MIN_DIMENSION: usize = 20;

    pub fn with_dimension(dimension: usize) -> Self {
        Self {
            dimension,
            ..Self::default()
        }
    }

    pub fn unchecked(mut self) -> Self {
        self.check_convergence = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension < Self::MIN_DIMENSION {
            return Err(invalid(
                "dimension",
                format!("must be at least {}, got {}", Self::MIN_DIMENSION, self.dimension),
            ));
        }
        if !(self.tolerance_ghz > 0.0) {
            return Err(invalid("tolerance_ghz", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real"))]
pub struct EigenSolution<T> {
    pub params: FluxoniumParams<T>,
    /// Lowest levels in GHz, ascending.
    pub energies: Vec<T>,
    /// `states[α][n]`: amplitude of oscillator state `n` in eigenstate `α`.
    pub states: Vec<Vec<T>>,
    pub basis: BasisConfig,
    /// Largest level shift seen in the dimension-doubling check, when run.
    pub convergence_shift: Option<T>,
}

impl<T: Real> EigenSolution<T> {
    pub fn converged(&self) -> bool {
        self.convergence_shift.is_some()
    }

    pub fn levels(&self) -> usize {
        self.energies.len()
    }
}

/// Magnitudes `|<n+d| e^{iθ} |n>|` for `θ = φ_zpf (a + a†)`, indexed
/// `[d][n]` for `n + d < dim`.
///
/// These are `sqrt(n!/(n+d)!) x^{d/2} e^{-x/2} L_n^{(d)}(x)` with
/// `x = φ_zpf²`, generated by the normalized Laguerre recurrence so no
/// factorial is ever formed.
pub(crate) fn displacement_magnitudes(x: f64, dim: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(dim);
    let mut log_fact = 0.0f64;
    for d in 0..dim {
        if d > 0 {
            log_fact += (d as f64).ln();
        }
        let len = dim - d;
        let mut h = vec![0.0f64; len];
        let df = d as f64;
        let log_h0 = 0.5 * (-x + df * x.ln() - log_fact);
        h[0] = if x > 0.0 { log_h0.exp() } else if d == 0 { 1.0 } else { 0.0 };
        if len > 1 {
            h[1] = (1.0 + df - x) * h[0] / (df + 1.0).sqrt();
        }
        for n in 1..len.saturating_sub(1) {
            let nf = n as f64;
            h[n + 1] = ((2.0 * nf + 1.0 + df - x) * h[n] - (nf * (nf + df)).sqrt() * h[n - 1])
                / ((nf + 1.0) * (nf + 1.0 + df)).sqrt();
        }
        out.push(h);
    }
    out
}

/// Matrix of Eq.-style fluxonium Hamiltonian in the oscillator basis.
pub fn hamiltonian<T: Real>(p: &FluxoniumParams<T>, basis: &BasisConfig) -> Result<SymmetricMatrix<T>> {
    p.validate()?;
    basis.validate()?;
    Ok(build(p, basis.dimension))
}

fn build<T: Real>(p: &FluxoniumParams<T>, dim: usize) -> SymmetricMatrix<T> {
    let zpf = p.phase_zpf().as_f64();
    let omega = p.oscillator_frequency().as_f64();
    let e_j = p.e_j.as_f64();
    let phase = std::f64::consts::TAU * p.flux.as_f64();
    let (sin_ext, cos_ext) = phase.sin_cos();
    let g = displacement_magnitudes(zpf * zpf, dim);
    SymmetricMatrix::from_lower(dim, |m, n| {
        let d = m - n;
        let sign = if (d / 2) % 2 == 0 { 1.0 } else { -1.0 };
        let potential = if d % 2 == 0 {
            cos_ext * sign * g[d][n]
        } else {
            sin_ext * sign * g[d][n]
        };
        let diag = if d == 0 { omega * (n as f64 + 0.5) } else { 0.0 };
        T::lit(diag - e_j * potential)
    })
}

fn check_levels(k: usize, basis: &BasisConfig) -> Result<()> {
    if k == 0 || k > basis.dimension / 3 {
        return Err(invalid(
            "k",
            format!("need 1 <= k <= dimension/3 = {}, got {k}", basis.dimension / 3),
        ));
    }
    Ok(())
}

/// Largest shift of the lowest `k` levels when the dimension is doubled.
fn doubling_check<T: Real>(p: &FluxoniumParams<T>, basis: &BasisConfig, coarse: &[T]) -> Result<T> {
    let fine = symmetric_eigenvalues(&build(p, 2 * basis.dimension))?;
    let shift = coarse
        .iter()
        .zip(&fine)
        .map(|(a, b)| (*a - *b).abs())
        .fold(T::zero(), T::max);
    // Rounding in the eigensolver scales with the largest diagonal entry.
    let scale = p.oscillator_frequency() * T::from_usize_lossy(2 * basis.dimension) + p.e_j;
    let floor = T::lit(basis.tolerance_ghz).max(T::lit(100.0) * T::epsilon() * scale);
    if shift > floor {
        return Err(Error::BasisNotConverged {
            dimension: basis.dimension,
            shift: shift.as_f64(),
            coarse: coarse.iter().map(|v| v.as_f64()).collect(),
            fine: fine[..coarse.len()].iter().map(|v| v.as_f64()).collect(),
        });
    }
    Ok(shift)
}

/// Lowest `k` eigenpairs of the fluxonium Hamiltonian.
pub fn eigensystem<T: Real>(p: &FluxoniumParams<T>, basis: &BasisConfig, k: usize) -> Result<EigenSolution<T>> {
    check_levels(k, basis)?;
    let h = hamiltonian(p, basis)?;
    let eig = symmetric_eigen(&h, k)?;
    let convergence_shift = if basis.check_convergence {
        Some(doubling_check(p, basis, &eig.values)?)
    } else {
        None
    };
    Ok(EigenSolution {
        params: *p,
        energies: eig.values,
        states: eig.vectors,
        basis: *basis,
        convergence_shift,
    })
}

/// Lowest `k` energies without eigenvectors.
pub fn energy_levels<T: Real>(p: &FluxoniumParams<T>, basis: &BasisConfig, k: usize) -> Result<Vec<T>> {
    check_levels(k, basis)?;
    let mut values = symmetric_eigenvalues(&hamiltonian(p, basis)?)?;
    values.truncate(k);
    if basis.check_convergence {
        doubling_check(p, basis, &values)?;
    }
    Ok(values)
}

/// `E_b − E_a` in GHz.
pub fn transition_frequency<T: Real>(sol: &EigenSolution<T>, a: usize, b: usize) -> Result<T> {
    if b <= a {
        return Err(invalid("b", format!("upper level {b} must exceed lower level {a}")));
    }
    if b >= sol.levels() {
        return Err(invalid("b", format!("level {b} not computed (have {})", sol.levels())));
    }
    Ok(sol.energies[b] - sol.energies[a])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dispersion<T> {
    /// `d f_ab / dΦ_ext` in GHz per Φ0 from the step `δΦ`.
    pub value: T,
    /// Same derivative from the step `δΦ/2`.
    pub half_step: T,
    /// `false` when the two estimates differ by more than 0.1%.
    pub richardson_ok: bool,
}

/// Central-difference slope of the `a → b` transition frequency.
pub fn flux_dispersion<T: Real>(
    p: &FluxoniumParams<T>,
    basis: &BasisConfig,
    a: usize,
    b: usize,
    step: T,
) -> Result<Dispersion<T>> {
    if !(step >= T::lit(1e-6) && step <= T::lit(1e-2)) {
        return Err(invalid("step", format!("δΦ must lie in [1e-6, 1e-2], got {step}")));
    }
    if b <= a {
        return Err(invalid("b", format!("upper level {b} must exceed lower level {a}")));
    }
    let k = (b + 1).max(2);
    if basis.check_convergence {
        energy_levels(p, basis, k)?;
    }
    let quiet = basis.unchecked();
    let f = |flux: T| -> Result<T> {
        let e = energy_levels(&p.at_flux(flux), &quiet, k)?;
        Ok(e[b] - e[a])
    };
    let slope = |h: T| -> Result<T> { Ok((f(p.flux + h)? - f(p.flux - h)?) / (T::lit(2.0) * h)) };
    let value = slope(step)?;
    let half_step = slope(step / T::lit(2.0))?;
    let tol = T::lit(1e-3) * half_step.abs() + T::lit(1e-6);
    Ok(Dispersion {
        value,
        half_step,
        richardson_ok: (value - half_step).abs() <= tol,
    })
}

/// Uniform phase grid `φ ∈ [−Lπ, Lπ]` with `intervals` steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub half_width_pi: usize,
    pub intervals: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            half_width_pi: 8,
            intervals: 4096,
        }
    }
}

impl GridSpec {
    /// Grid steps per 2π; the displaced wavefunction `ψ(φ − 2π)` is then an
    /// index shift.
    pub fn steps_per_period(&self) -> usize {
        self.intervals / self.half_width_pi
    }

    pub fn validate(&self) -> Result<()> {
        if self.half_width_pi < 2 {
            return Err(invalid("half_width_pi", "grid must extend beyond ±2π"));
        }
        if self.intervals == 0 || self.intervals % (2 * self.half_width_pi) != 0 {
            return Err(invalid(
                "intervals",
                "must be a positive multiple of 2L so that 2π shifts stay on grid at half resolution",
            ));
        }
        Ok(())
    }
}

/// Eigenfunctions sampled on a uniform phase grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseGrid<T> {
    pub spec: GridSpec,
    /// `intervals + 1` phase points.
    pub points: Vec<T>,
    /// `values[α][i] = ψ_α(points[i])`.
    pub values: Vec<Vec<T>>,
    pub flux: T,
}

impl<T: Real> PhaseGrid<T> {
    pub fn step(&self) -> T {
        self.points[1] - self.points[0]
    }

    /// Trapezoid `∫ |ψ_α|² dφ`.
    pub fn norm(&self, level: usize) -> T {
        let v = &self.values[level];
        let last = v.len() - 1;
        let inner: T = v[1..last].iter().map(|&x| x * x).sum();
        (inner + (v[0] * v[0] + v[last] * v[last]) / T::lit(2.0)) * self.step()
    }
}

/// Normalized Hermite functions `h_0..h_{n-1}` at `xi` written into `out`.
pub(crate) fn hermite_functions(xi: f64, out: &mut [f64]) {
    let n = out.len();
    out[0] = std::f64::consts::PI.powf(-0.25) * (-0.5 * xi * xi).exp();
    if n > 1 {
        out[1] = std::f64::consts::SQRT_2 * xi * out[0];
    }
    for k in 1..n.saturating_sub(1) {
        let kf = k as f64;
        out[k + 1] = (2.0 / (kf + 1.0)).sqrt() * xi * out[k] - (kf / (kf + 1.0)).sqrt() * out[k - 1];
    }
}

/// Samples every computed eigenstate on the grid.
///
/// Each state is `Σ_n c_n u_n(φ + 2πΦ_ext)` with `u_n` the oscillator
/// eigenfunctions of width `φ_zpf`, centred on the minimum of the inductive
/// potential at `φ = −2πΦ_ext`.
pub fn wavefunctions_on_grid<T: Real>(sol: &EigenSolution<T>, spec: &GridSpec) -> Result<PhaseGrid<T>> {
    spec.validate()?;
    let zpf = sol.params.phase_zpf().as_f64();
    let offset = std::f64::consts::TAU * sol.params.flux.as_f64();
    let scale = std::f64::consts::SQRT_2 * zpf;
    let norm = scale.sqrt().recip();
    let half = spec.half_width_pi as f64 * std::f64::consts::PI;
    let m = spec.intervals;
    let dim = sol.basis.dimension;
    let coeffs: Vec<Vec<f64>> = sol
        .states
        .iter()
        .map(|s| s.iter().map(|c| c.as_f64()).collect())
        .collect();

    let mut values = vec![vec![T::zero(); m + 1]; coeffs.len()];
    let mut points = Vec::with_capacity(m + 1);
    let mut h = vec![0.0f64; dim];
    for i in 0..=m {
        let phi = -half + 2.0 * half * i as f64 / m as f64;
        points.push(T::lit(phi));
        hermite_functions((phi + offset) / scale, &mut h);
        for (state, c) in values.iter_mut().zip(&coeffs) {
            let psi: f64 = c.iter().zip(&h).map(|(a, b)| a * b).sum();
            state[i] = T::lit(psi * norm);
        }
    }

    let limit = T::lit(1e-8).max(T::lit(10.0) * T::epsilon());
    let edge = values
        .iter()
        .map(|v| v[0].abs().max(v[m].abs()))
        .fold(T::zero(), T::max);
    if edge > limit {
        return Err(Error::BoundaryLeakage {
            amplitude: edge.as_f64(),
            half_width: spec.half_width_pi as f64,
        });
    }
    Ok(PhaseGrid {
        spec: *spec,
        points,
        values,
        flux: sol.params.flux,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow<T> {
    pub phi_ext: T,
    #[serde(rename = "f01_GHz")]
    pub f01: T,
    #[serde(rename = "f02_GHz")]
    pub f02: T,
    #[serde(rename = "f12_GHz")]
    pub f12: T,
}

/// Lowest three transitions at each flux point (parallel over points,
/// results in input order).
pub fn flux_sweep<T: Real>(p: &FluxoniumParams<T>, basis: &BasisConfig, fluxes: &[T]) -> Result<Vec<SweepRow<T>>> {
    fluxes
        .par_iter()
        .map(|&phi| {
            let e = energy_levels(&p.at_flux(phi), basis, 3)?;
            Ok(SweepRow {
                phi_ext: phi,
                f01: e[1] - e[0],
                f02: e[2] - e[0],
                f12: e[2] - e[1],
            })
        })
        .collect()
}
