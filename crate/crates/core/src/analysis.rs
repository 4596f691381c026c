//! Data reduction mirroring the measurements: spectroscopy and Ramsey fits,
//! repeated-Ramsey frequency PSDs, power-law fits and flux-noise amplitudes,
//! plus the synthetic generators used for closure tests.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::circuit::FluxoniumParams;
use crate::error::{invalid, require_positive, Error, Result};
use crate::numerics::fourier::inverse_real_dft;
use crate::numerics::{least_squares, nelder_mead, periodogram, Estimator, NelderMeadOptions, RngSeed, SpectralDensity};
use crate::spectrum::{energy_levels, BasisConfig};
use crate::Real;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

pub(crate) fn read_rows<R: Read, D: DeserializeOwned>(reader: R, what: &str) -> Result<Vec<D>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader)
        .deserialize()
        .collect::<std::result::Result<Vec<D>, _>>()
        .map_err(|e| Error::Parse {
            what: what.into(),
            message: e.to_string(),
        })
}

pub(crate) fn write_rows<W: Write, S: Serialize>(writer: W, rows: impl IntoIterator<Item = S>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let err = |e: csv::Error| Error::Parse {
        what: "csv output".into(),
        message: e.to_string(),
    };
    for r in rows {
        w.serialize(r).map_err(err)?;
    }
    w.flush().map_err(|e| err(e.into()))
}

fn median<T: Real>(values: &[T]) -> T {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / T::lit(2.0)
    }
}

fn rms<T: Real>(r: &[T]) -> T {
    (r.iter().map(|&v| v * v).sum::<T>() / T::from_usize_lossy(r.len().max(1))).sqrt()
}

/// Residual bootstrap: refits `fitted + resampled residuals` and returns the
/// standard deviation of each parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bootstrap {
    pub resamples: usize,
    #[serde(default)]
    pub seed: RngSeed,
}

fn bootstrap_spread<T, F>(cfg: &Bootstrap, fitted: &[T], residuals: &[T], refit: F) -> Result<Vec<T>>
where
    T: Real,
    F: Fn(&[T]) -> Result<Vec<T>> + Sync,
{
    if cfg.resamples < 2 {
        return Err(invalid("bootstrap.resamples", "need at least 2"));
    }
    let n = residuals.len();
    let draws: Vec<Vec<T>> = (0..cfg.resamples)
        .into_par_iter()
        .map(|b| {
            let mut rng = cfg.seed.stream(b as u64);
            let y: Vec<T> = fitted.iter().map(|&f| f + residuals[rng.gen_range(0..n)]).collect();
            refit(&y)
        })
        .collect::<Result<_>>()?;
    let k = draws[0].len();
    let m = T::from_usize_lossy(draws.len());
    Ok((0..k)
        .map(|i| {
            let mean = draws.iter().map(|d| d[i]).sum::<T>() / m;
            (draws.iter().map(|d| (d[i] - mean).powi(2)).sum::<T>() / (m - T::one())).sqrt()
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Spectroscopy

/// Transition `lower → upper`, written `01`, `12`, or `3-10`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Transition {
    pub lower: usize,
    pub upper: usize,
}

impl Transition {
    pub fn new(lower: usize, upper: usize) -> Result<Self> {
        if upper <= lower {
            return Err(invalid("transition", format!("upper level {upper} must exceed {lower}")));
        }
        Ok(Self { lower, upper })
    }
}

impl fmt::Display for Transition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.lower < 10 && self.upper < 10 {
            write!(f, "{}{}", self.lower, self.upper)
        } else {
            write!(f, "{}-{}", self.lower, self.upper)
        }
    }
}

impl FromStr for Transition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse {
            what: "transition".into(),
            message: format!("expected e.g. `01` or `3-10`, got `{s}`"),
        };
        let s = s.trim();
        let (a, b) = match s.split_once('-') {
            Some(pair) => pair,
            None if s.len() == 2 && s.is_ascii() => s.split_at(1),
            None => return Err(bad()),
        };
        let a = a.parse().map_err(|_| bad())?;
        let b = b.parse().map_err(|_| bad())?;
        Transition::new(a, b)
    }
}

impl TryFrom<String> for Transition {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Transition> for String {
    fn from(t: Transition) -> String {
        t.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real"))]
pub struct SpectroscopyRow<T> {
    pub phi_ext: T,
    pub transition: Transition,
    #[serde(rename = "freq_GHz")]
    pub freq: T,
    #[serde(rename = "err_GHz")]
    pub err: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real"))]
pub struct SpectroscopyDataset<T> {
    pub rows: Vec<SpectroscopyRow<T>>,
}

/// Smallest dataset and flux span accepted by [`fit_spectrum`].
pub const MIN_SPECTROSCOPY_ROWS: usize = 6;
pub const MIN_FLUX_SPAN: f64 = 0.2;

impl<T: Real> SpectroscopyDataset<T> {
    pub fn new(rows: Vec<SpectroscopyRow<T>>) -> Result<Self> {
        let d = Self { rows };
        d.validate()?;
        Ok(d)
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        Self::new(read_rows(reader, "spectroscopy csv")?)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_rows(writer, &self.rows)
    }

    pub fn flux_span(&self) -> T {
        let (lo, hi) = self
            .rows
            .iter()
            .fold((T::infinity(), T::neg_infinity()), |(lo, hi), r| (lo.min(r.phi_ext), hi.max(r.phi_ext)));
        hi - lo
    }

    pub fn validate(&self) -> Result<()> {
        for (i, r) in self.rows.iter().enumerate() {
            if !r.phi_ext.is_finite() {
                return Err(invalid(format!("rows[{i}].phi_ext"), "must be finite"));
            }
            require_positive(&format!("rows[{i}].freq_GHz"), r.freq)?;
            require_positive(&format!("rows[{i}].err_GHz"), r.err)?;
        }
        Ok(())
    }

    /// Enough rows over a wide enough flux range to pin three energies.
    pub fn check_identifiable(&self) -> Result<()> {
        if self.rows.len() < MIN_SPECTROSCOPY_ROWS {
            return Err(Error::Identifiability(format!(
                "{} spectroscopy rows; need at least {MIN_SPECTROSCOPY_ROWS}",
                self.rows.len()
            )));
        }
        let span = self.flux_span();
        if span < T::lit(MIN_FLUX_SPAN) {
            return Err(Error::Identifiability(format!(
                "rows span {span} flux quanta; need at least {MIN_FLUX_SPAN}"
            )));
        }
        Ok(())
    }
}

/// Transition frequencies predicted for every row (levels computed once per
/// distinct flux value).
pub fn predict_transitions<T: Real>(
    params: &FluxoniumParams<T>,
    rows: &[SpectroscopyRow<T>],
    basis: &BasisConfig,
) -> Result<Vec<T>> {
    let levels = rows.iter().map(|r| r.transition.upper + 1).max().unwrap_or(2);
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| rows[a].phi_ext.partial_cmp(&rows[b].phi_ext).expect("finite flux"));
    let mut groups: Vec<(T, Vec<usize>)> = Vec::new();
    for i in order {
        match groups.last_mut() {
            Some((phi, members)) if *phi == rows[i].phi_ext => members.push(i),
            _ => groups.push((rows[i].phi_ext, vec![i])),
        }
    }
    let solved: Vec<(Vec<usize>, Vec<T>)> = groups
        .into_par_iter()
        .map(|(phi, members)| Ok((members, energy_levels(&params.at_flux(phi), basis, levels)?)))
        .collect::<Result<_>>()?;
    let mut out = vec![T::zero(); rows.len()];
    for (members, e) in solved {
        for i in members {
            let t = rows[i].transition;
            out[i] = e[t.upper] - e[t.lower];
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumFitOptions {
    /// Basis used inside the optimizer (fast, unchecked).
    pub basis: BasisConfig,
    /// Basis for the final residuals; its convergence check is enforced.
    pub final_basis: BasisConfig,
    /// Independent Nelder–Mead starts (the given start plus jittered copies).
    pub starts: usize,
    pub seed: RngSeed,
    /// Fits with a larger RMS residual are flagged.
    pub max_rms_residual_ghz: f64,
    pub bootstrap: Option<Bootstrap>,
}

impl Default for SpectrumFitOptions {
    fn default() -> Self {
        Self {
            basis: BasisConfig::with_dimension(60).unchecked(),
            final_basis: BasisConfig::default(),
            starts: 3,
            seed: RngSeed::default(),
            max_rms_residual_ghz: 0.01,
            bootstrap: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianErrors<T> {
    #[serde(rename = "E_J_GHz")]
    pub e_j: T,
    #[serde(rename = "E_C_GHz")]
    pub e_c: T,
    #[serde(rename = "E_L_GHz")]
    pub e_l: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumFit<T> {
    #[serde(rename = "E_J_GHz")]
    pub e_j: T,
    #[serde(rename = "E_C_GHz")]
    pub e_c: T,
    #[serde(rename = "E_L_GHz")]
    pub e_l: T,
    /// Linearized (Jacobian) standard errors; absent when the Jacobian is
    /// rank deficient.
    pub standard_errors: Option<HamiltonianErrors<T>>,
    pub bootstrap_errors: Option<HamiltonianErrors<T>>,
    /// `predicted − measured`, GHz, row order.
    #[serde(rename = "residuals_GHz")]
    pub residuals: Vec<T>,
    #[serde(rename = "rms_residual_GHz")]
    pub rms_residual: T,
    /// `Σ (residual/err)²`.
    pub chi_squared: T,
    pub converged: bool,
    /// Set when the optimizer hit its budget or the RMS residual exceeds the
    /// threshold.
    pub flagged: bool,
    pub evaluations: usize,
    /// Best objective after each simplex iteration of the winning start.
    pub objective_history: Vec<T>,
}

impl<T: Real> SpectrumFit<T> {
    pub fn params(&self) -> FluxoniumParams<T> {
        FluxoniumParams::new(self.e_j, self.e_c, self.e_l).expect("fitted energies are positive")
    }
}

fn chi_squared<T: Real>(pred: &[T], rows: &[SpectroscopyRow<T>]) -> T {
    pred.iter()
        .zip(rows)
        .map(|(&p, r)| ((p - r.freq) / r.err).powi(2))
        .sum()
}

fn spectrum_search<T: Real>(
    rows: &[SpectroscopyRow<T>],
    start: [T; 3],
    opts: &SpectrumFitOptions,
) -> Result<(crate::numerics::Minimum<T>, usize)> {
    let objective = |x: &[T]| -> T {
        let Ok(p) = FluxoniumParams::new(x[0].exp(), x[1].exp(), x[2].exp()) else {
            return T::infinity();
        };
        match predict_transitions(&p, rows, &opts.basis) {
            Ok(pred) => chi_squared(&pred, rows),
            Err(_) => T::infinity(),
        }
    };
    let nm = NelderMeadOptions {
        initial_step: vec![T::lit(0.05); 3],
        x_tolerance: T::lit(1e-7),
        f_tolerance: T::lit(1e-9),
        max_iterations: 4000,
        restarts: 2,
    };
    let mut best: Option<crate::numerics::Minimum<T>> = None;
    let mut evaluations = 0;
    let mut rng = opts.seed.rng();
    for s in 0..opts.starts.max(1) {
        let x0: Vec<T> = start
            .iter()
            .map(|&v| {
                let jitter = if s == 0 { 0.0 } else { rng.gen_range(-0.15..0.15) };
                v.ln() + T::lit(jitter)
            })
            .collect();
        if !objective(&x0).is_finite() {
            continue;
        }
        let m = nelder_mead(objective, &x0, &nm)?;
        evaluations += m.evaluations;
        if best.as_ref().map_or(true, |b| m.value < b.value) {
            best = Some(m);
        }
    }
    let best = best.ok_or_else(|| invalid("start", "no start point gives a finite objective"))?;
    Ok((best, evaluations))
}

/// Weighted least squares of measured transitions against the Hamiltonian,
/// searched in log-energy space with multi-start Nelder–Mead.
pub fn fit_spectrum<T: Real>(
    data: &SpectroscopyDataset<T>,
    start: &FluxoniumParams<T>,
    opts: &SpectrumFitOptions,
) -> Result<SpectrumFit<T>> {
    data.validate()?;
    data.check_identifiable()?;
    start.validate()?;
    let rows = &data.rows;
    let (best, evaluations) = spectrum_search(rows, [start.e_j, start.e_c, start.e_l], opts)?;
    let theta: Vec<T> = best.argmin.iter().map(|v| v.exp()).collect();
    let p = FluxoniumParams::new(theta[0], theta[1], theta[2])?;
    let pred = predict_transitions(&p, rows, &opts.final_basis)?;
    let residuals: Vec<T> = pred.iter().zip(rows).map(|(&p, r)| p - r.freq).collect();
    let rms_residual = rms(&residuals);

    // Gauss–Newton covariance from a central-difference Jacobian of the
    // normalized residuals.
    let weighted: Vec<T> = residuals.iter().zip(rows).map(|(&r, row)| r / row.err).collect();
    let mut columns = Vec::with_capacity(3);
    for k in 0..3 {
        let h = theta[k] * T::lit(1e-5);
        let shifted = |sign: T| {
            let mut t = theta.clone();
            t[k] = t[k] + sign * h;
            predict_transitions(&FluxoniumParams::new(t[0], t[1], t[2])?, rows, &opts.basis)
        };
        let up = shifted(T::one())?;
        let down = shifted(-T::one())?;
        columns.push(
            up.iter()
                .zip(&down)
                .zip(rows)
                .map(|((&u, &d), r)| (u - d) / (T::lit(2.0) * h * r.err))
                .collect::<Vec<T>>(),
        );
    }
    let standard_errors = least_squares(&columns, &weighted).ok().map(|ls| {
        let se = ls.standard_errors();
        HamiltonianErrors {
            e_j: se[0],
            e_c: se[1],
            e_l: se[2],
        }
    });

    let bootstrap_errors = match &opts.bootstrap {
        None => None,
        Some(b) => {
            let spread = bootstrap_spread(b, &pred, &residuals, |y| {
                let resampled: Vec<SpectroscopyRow<T>> = rows
                    .iter()
                    .zip(y)
                    .map(|(r, &f)| SpectroscopyRow { freq: f, ..r.clone() })
                    .collect();
                let single = SpectrumFitOptions {
                    starts: 1,
                    ..opts.clone()
                };
                let (m, _) = spectrum_search(&resampled, [theta[0], theta[1], theta[2]], &single)?;
                Ok(m.argmin.iter().map(|v| v.exp()).collect())
            })?;
            Some(HamiltonianErrors {
                e_j: spread[0],
                e_c: spread[1],
                e_l: spread[2],
            })
        }
    };

    Ok(SpectrumFit {
        e_j: theta[0],
        e_c: theta[1],
        e_l: theta[2],
        standard_errors,
        bootstrap_errors,
        chi_squared: chi_squared(&pred, rows),
        flagged: !best.converged || rms_residual > T::lit(opts.max_rms_residual_ghz),
        converged: best.converged,
        residuals,
        rms_residual,
        evaluations,
        objective_history: best.best_history,
    })
}

/// Noisy (or exact, for `noise_ghz = 0`) transitions of `params` at every
/// flux for every transition.
pub fn synthetic_spectroscopy<T: Real>(
    params: &FluxoniumParams<T>,
    fluxes: &[T],
    transitions: &[Transition],
    err_ghz: T,
    noise_ghz: T,
    seed: RngSeed,
) -> Result<SpectroscopyDataset<T>> {
    let mut rows = Vec::with_capacity(fluxes.len() * transitions.len());
    for &phi in fluxes {
        for &t in transitions {
            rows.push(SpectroscopyRow {
                phi_ext: phi,
                transition: t,
                freq: T::zero(),
                err: err_ghz,
            });
        }
    }
    let exact = predict_transitions(params, &rows, &BasisConfig::default())?;
    let mut rng = seed.rng();
    for (r, f) in rows.iter_mut().zip(exact) {
        let z: f64 = rng.sample(StandardNormal);
        r.freq = f + noise_ghz * T::lit(z);
    }
    SpectroscopyDataset::new(rows)
}

// ---------------------------------------------------------------------------
// Ramsey

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RamseyMetadata {
    pub phi_ext: Option<f64>,
    pub timestamp: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RamseyRow<T> {
    delay_us: T,
    signal: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real"))]
pub struct RamseyTrace<T> {
    pub delays_us: Vec<T>,
    pub signal: Vec<T>,
    /// Separately measured T1 (µs), held fixed in the fit; `inf` disables
    /// the exponential factor.
    pub t1_us: T,
    #[serde(default)]
    pub metadata: RamseyMetadata,
}

pub const MIN_RAMSEY_POINTS: usize = 20;

impl<T: Real> RamseyTrace<T> {
    pub fn new(delays_us: Vec<T>, signal: Vec<T>, t1_us: T) -> Result<Self> {
        let t = Self {
            delays_us,
            signal,
            t1_us,
            metadata: RamseyMetadata::default(),
        };
        t.validate()?;
        Ok(t)
    }

    pub fn read_csv<R: Read>(reader: R, t1_us: T) -> Result<Self> {
        let rows: Vec<RamseyRow<T>> = read_rows(reader, "ramsey csv")?;
        Self::new(
            rows.iter().map(|r| r.delay_us).collect(),
            rows.iter().map(|r| r.signal).collect(),
            t1_us,
        )
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_rows(
            writer,
            self.delays_us
                .iter()
                .zip(&self.signal)
                .map(|(&delay_us, &signal)| RamseyRow { delay_us, signal }),
        )
    }

    pub fn span(&self) -> T {
        self.delays_us[self.delays_us.len() - 1] - self.delays_us[0]
    }

    pub fn validate(&self) -> Result<()> {
        if self.delays_us.len() != self.signal.len() {
            return Err(invalid("signal", "length differs from delays"));
        }
        if self.delays_us.len() < MIN_RAMSEY_POINTS {
            return Err(invalid(
                "delays_us",
                format!("{} points; need at least {MIN_RAMSEY_POINTS}", self.delays_us.len()),
            ));
        }
        if self.delays_us.iter().chain(&self.signal).any(|v| !v.is_finite()) {
            return Err(invalid("signal", "values must be finite"));
        }
        if let Some(i) = self.delays_us.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(invalid(format!("delays_us[{}]", i + 1), "delays must be strictly increasing"));
        }
        if !(self.t1_us > T::zero()) {
            return Err(invalid("t1_us", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RamseyErrors<T> {
    #[serde(rename = "T_phi_us")]
    pub t_phi: T,
    #[serde(rename = "freq_MHz")]
    pub freq: T,
    #[serde(rename = "phase_rad")]
    pub phase: T,
    pub amplitude: T,
    pub offset: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RamseyFit<T> {
    #[serde(rename = "T_phi_us")]
    pub t_phi: T,
    #[serde(rename = "freq_MHz")]
    pub freq: T,
    #[serde(rename = "phase_rad")]
    pub phase: T,
    pub amplitude: T,
    pub offset: T,
    pub standard_errors: Option<RamseyErrors<T>>,
    pub bootstrap_errors: Option<RamseyErrors<T>>,
    pub rms_residual: T,
    /// The fixed T1 the fit used (provenance).
    #[serde(rename = "T1_us_fixed")]
    pub t1_us: T,
    /// `false`: no clear oscillation; the frequency was fitted from zero.
    pub oscillation_detected: bool,
    /// `false`: the Gaussian time exceeds three trace spans and is only a
    /// lower-bound-like estimate.
    pub t_phi_resolved: bool,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RamseyFitOptions {
    /// Periodogram peak-to-median power ratio required to call an oscillation.
    pub min_peak_ratio: f64,
    pub bootstrap: Option<Bootstrap>,
}

impl Default for RamseyFitOptions {
    fn default() -> Self {
        Self {
            min_peak_ratio: 10.0,
            bootstrap: None,
        }
    }
}

/// Peak of the (non-uniform) DFT power of the mean-removed signal over
/// `f_k = k / (4 span)` up to the median-spacing Nyquist frequency; returns
/// the peak frequency (inverse time units) and its ratio to the median power.
pub fn dominant_frequency<T: Real>(t: &[T], y: &[T]) -> (T, T) {
    let n = T::from_usize_lossy(y.len());
    let mean = y.iter().copied().sum::<T>() / n;
    let span = t[t.len() - 1] - t[0];
    let spacing: Vec<T> = t.windows(2).map(|w| w[1] - w[0]).collect();
    let nyquist = T::lit(0.5) / median(&spacing);
    let df = T::lit(0.25) / span;
    let bins = (nyquist / df).floor().to_usize().unwrap_or(1).max(1);
    let powers: Vec<T> = (1..=bins)
        .map(|k| {
            let f = T::from_usize_lossy(k) * df;
            let c = t.iter().zip(y).fold(Complex::new(T::zero(), T::zero()), |acc, (&ti, &yi)| {
                let (s, c) = (T::TAU() * f * (ti - t[0])).sin_cos();
                acc + Complex::new(c, -s) * (yi - mean)
            });
            c.norm_sqr()
        })
        .collect();
    let (k, &peak) = powers
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite power"))
        .expect("at least one bin");
    let med = median(&powers);
    let ratio = if med > T::zero() { peak / med } else { T::infinity() };
    (T::from_usize_lossy(k + 1) * df, ratio)
}

fn ramsey_envelope<T: Real>(t: T, t1: T, tphi: T) -> T {
    (-t / (T::lit(2.0) * t1)).exp() * (-(t / tphi).powi(2)).exp()
}

/// Linear sub-problem for fixed `(T_φ, f)`: `y ≈ p g cos + q g sin + c`.
/// Returns `(p, q, c, rss)`.
fn ramsey_linear<T: Real>(trace: &RamseyTrace<T>, tphi: T, f: T) -> Option<(T, T, T, T)> {
    let n = trace.delays_us.len();
    let mut gc = Vec::with_capacity(n);
    let mut gs = Vec::with_capacity(n);
    for &t in &trace.delays_us {
        let g = ramsey_envelope(t, trace.t1_us, tphi);
        let (s, c) = (T::TAU() * f * t).sin_cos();
        gc.push(g * c);
        gs.push(g * s);
    }
    let ones = vec![T::one(); n];
    match least_squares(&[gc.clone(), gs, ones.clone()], &trace.signal) {
        Ok(ls) => Some((ls.coefficients[0], ls.coefficients[1], ls.coefficients[2], ls.residual_sum_squares)),
        // f → 0 leaves the sine column empty.
        Err(_) => least_squares(&[gc, ones], &trace.signal)
            .ok()
            .map(|ls| (ls.coefficients[0], T::zero(), ls.coefficients[1], ls.residual_sum_squares)),
    }
}

fn ramsey_model<T: Real>(t: T, t1: T, th: &[T; 5]) -> T {
    let [tphi, f, phase, a, c] = *th;
    a * ramsey_envelope(t, t1, tphi) * (T::TAU() * f * t + phase).cos() + c
}

fn ramsey_search<T: Real>(trace: &RamseyTrace<T>, f0: T) -> Result<([T; 5], usize)> {
    let span = trace.span();
    let objective = |x: &[T]| -> T {
        match ramsey_linear(trace, x[0].exp(), x[1].abs()) {
            Some((.., rss)) => rss,
            None => T::infinity(),
        }
    };
    let nm = NelderMeadOptions {
        initial_step: vec![T::lit(0.3), T::lit(0.1) / span],
        x_tolerance: T::lit(1e-11),
        f_tolerance: T::lit(1e-16),
        max_iterations: 4000,
        restarts: 2,
    };
    let mut best: Option<crate::numerics::Minimum<T>> = None;
    let mut evaluations = 0;
    for frac in [0.15, 0.5, 1.5] {
        let x0 = [(span * T::lit(frac)).ln(), f0];
        let m = nelder_mead(objective, &x0, &nm)?;
        evaluations += m.evaluations;
        if best.as_ref().map_or(true, |b| m.value < b.value) {
            best = Some(m);
        }
    }
    let best = best.expect("three starts");
    let tphi = best.argmin[0].exp();
    let f = best.argmin[1].abs();
    let (p, q, c, _) = ramsey_linear(trace, tphi, f).ok_or_else(|| Error::Identifiability("ramsey design".into()))?;
    // p = a cos φ, q = −a sin φ.
    let a = p.hypot(q);
    let phase = (-q).atan2(p);
    Ok(([tphi, f, phase, a, c], evaluations))
}

/// Fits `a e^{−t/2T1} e^{−(t/T_φ)²} cos(2πft + φ) + c` with `T1` fixed,
/// by variable projection: Nelder–Mead over `(ln T_φ, f)` with the linear
/// amplitudes solved exactly at every step. `f` starts at the periodogram peak.
pub fn fit_ramsey<T: Real>(trace: &RamseyTrace<T>, opts: &RamseyFitOptions) -> Result<RamseyFit<T>> {
    trace.validate()?;
    let (f_peak, ratio) = dominant_frequency(&trace.delays_us, &trace.signal);
    let span = trace.span();
    let oscillation_detected = ratio > T::lit(opts.min_peak_ratio) && f_peak >= T::one() / span;
    let f0 = if oscillation_detected { f_peak } else { T::zero() };
    let (theta, evaluations) = ramsey_search(trace, f0)?;

    let fitted: Vec<T> = trace.delays_us.iter().map(|&t| ramsey_model(t, trace.t1_us, &theta)).collect();
    let residuals: Vec<T> = trace.signal.iter().zip(&fitted).map(|(&y, &m)| y - m).collect();

    let mut columns = Vec::with_capacity(5);
    for k in 0..5 {
        let h = match k {
            0 | 1 | 3 => theta[k].abs() * T::lit(1e-6) + T::lit(1e-12),
            _ => T::lit(1e-6),
        };
        let mut up = theta;
        let mut down = theta;
        up[k] = up[k] + h;
        down[k] = down[k] - h;
        columns.push(
            trace
                .delays_us
                .iter()
                .map(|&t| (ramsey_model(t, trace.t1_us, &up) - ramsey_model(t, trace.t1_us, &down)) / (T::lit(2.0) * h))
                .collect::<Vec<T>>(),
        );
    }
    let standard_errors = least_squares(&columns, &residuals).ok().map(|ls| {
        let se = ls.standard_errors();
        RamseyErrors {
            t_phi: se[0],
            freq: se[1],
            phase: se[2],
            amplitude: se[3],
            offset: se[4],
        }
    });

    let bootstrap_errors = match &opts.bootstrap {
        None => None,
        Some(b) => {
            let spread = bootstrap_spread(b, &fitted, &residuals, |y| {
                let resampled = RamseyTrace {
                    signal: y.to_vec(),
                    ..trace.clone()
                };
                Ok(ramsey_search(&resampled, theta[1])?.0.to_vec())
            })?;
            Some(RamseyErrors {
                t_phi: spread[0],
                freq: spread[1],
                phase: spread[2],
                amplitude: spread[3],
                offset: spread[4],
            })
        }
    };

    Ok(RamseyFit {
        t_phi: theta[0],
        freq: theta[1],
        phase: theta[2],
        amplitude: theta[3],
        offset: theta[4],
        standard_errors,
        bootstrap_errors,
        rms_residual: rms(&residuals),
        t1_us: trace.t1_us,
        oscillation_detected,
        t_phi_resolved: theta[0] < T::lit(3.0) * span,
        evaluations,
    })
}

/// Independent fits, parallel over traces, results in input order.
pub fn fit_ramsey_batch<T: Real>(traces: &[RamseyTrace<T>], opts: &RamseyFitOptions) -> Vec<Result<RamseyFit<T>>> {
    traces.par_iter().map(|t| fit_ramsey(t, opts)).collect()
}

/// Parameters of a synthetic Ramsey trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RamseyTruth<T> {
    pub t1_us: T,
    pub t_phi_us: T,
    pub freq_mhz: T,
    pub phase: T,
    pub amplitude: T,
    pub offset: T,
}

/// Model trace on `delays_us` plus white Gaussian noise of standard
/// deviation `noise`.
pub fn synthetic_ramsey<T: Real, R: Rng + ?Sized>(
    delays_us: Vec<T>,
    truth: &RamseyTruth<T>,
    noise: T,
    rng: &mut R,
) -> Result<RamseyTrace<T>> {
    let th = [truth.t_phi_us, truth.freq_mhz, truth.phase, truth.amplitude, truth.offset];
    let signal = delays_us
        .iter()
        .map(|&t| {
            let z: f64 = rng.sample(StandardNormal);
            ramsey_model(t, truth.t1_us, &th) + noise * T::lit(z)
        })
        .collect();
    RamseyTrace::new(delays_us, signal, truth.t1_us)
}

// ---------------------------------------------------------------------------
// Repeated-Ramsey frequency series

/// Acquisition cadence of a repeated-Ramsey run. Recorded alongside the
/// series to set the accessible PSD band; it does not alter estimation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepeatedRamseyCadence {
    pub delays_per_trace: usize,
    pub averages: usize,
    pub trigger_period_s: f64,
    pub seconds_per_point: f64,
    pub repetitions: usize,
}

impl Default for RepeatedRamseyCadence {
    fn default() -> Self {
        Self {
            delays_per_trace: 100,
            averages: 500,
            trigger_period_s: 1e-3,
            seconds_per_point: 58.0,
            repetitions: 1000,
        }
    }
}

impl RepeatedRamseyCadence {
    /// Lowest resolvable and Nyquist frequency (Hz).
    pub fn band_hz(&self) -> (f64, f64) {
        (
            1.0 / (self.repetitions as f64 * self.seconds_per_point),
            0.5 / self.seconds_per_point,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FrequencyRow<T> {
    t_s: T,
    #[serde(rename = "f01_MHz")]
    f01_mhz: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real"))]
pub struct FrequencySeries<T> {
    pub times_s: Vec<T>,
    #[serde(rename = "f01_MHz")]
    pub f01_mhz: Vec<T>,
    #[serde(default)]
    pub cadence: Option<RepeatedRamseyCadence>,
}

pub const MIN_PSD_SAMPLES: usize = 64;
pub const MAX_GAP_RATIO: f64 = 1.5;

impl<T: Real> FrequencySeries<T> {
    pub fn new(times_s: Vec<T>, f01_mhz: Vec<T>) -> Result<Self> {
        if times_s.len() != f01_mhz.len() {
            return Err(invalid("f01_MHz", "length differs from t_s"));
        }
        if times_s.len() < 2 {
            return Err(invalid("t_s", "need at least two samples"));
        }
        if times_s.iter().chain(&f01_mhz).any(|v| !v.is_finite()) {
            return Err(invalid("f01_MHz", "values must be finite"));
        }
        if let Some(i) = times_s.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(invalid(format!("t_s[{}]", i + 1), "times must be strictly increasing"));
        }
        Ok(Self {
            times_s,
            f01_mhz,
            cadence: None,
        })
    }

    /// Uniformly sampled series starting at `t = 0`.
    pub fn uniform(dt: T, f01_mhz: Vec<T>) -> Result<Self> {
        require_positive("dt", dt)?;
        let times = (0..f01_mhz.len()).map(|k| T::from_usize_lossy(k) * dt).collect();
        Self::new(times, f01_mhz)
    }

    pub fn with_cadence(mut self, cadence: RepeatedRamseyCadence) -> Self {
        self.cadence = Some(cadence);
        self
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let rows: Vec<FrequencyRow<T>> = read_rows(reader, "frequency series csv")?;
        Self::new(rows.iter().map(|r| r.t_s).collect(), rows.iter().map(|r| r.f01_mhz).collect())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_rows(
            writer,
            self.times_s
                .iter()
                .zip(&self.f01_mhz)
                .map(|(&t_s, &f01_mhz)| FrequencyRow { t_s, f01_mhz }),
        )
    }

    pub fn mean_subtracted(&self) -> Vec<T> {
        let mean = self.f01_mhz.iter().copied().sum::<T>() / T::from_usize_lossy(self.f01_mhz.len());
        self.f01_mhz.iter().map(|&f| f - mean).collect()
    }

    pub fn median_interval(&self) -> T {
        let d: Vec<T> = self.times_s.windows(2).map(|w| w[1] - w[0]).collect();
        median(&d)
    }

    /// Largest sampling interval over the median one.
    pub fn gap_ratio(&self) -> T {
        let max = self
            .times_s
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(T::zero(), T::max);
        max / self.median_interval()
    }
}

/// One-sided PSD of `f01(t) − mean` in MHz²/Hz, using the median sampling
/// interval.
pub fn frequency_psd<T: Real>(series: &FrequencySeries<T>) -> Result<SpectralDensity<T>> {
    if series.f01_mhz.len() < MIN_PSD_SAMPLES {
        return Err(invalid(
            "f01_MHz",
            format!("{} samples; need at least {MIN_PSD_SAMPLES}", series.f01_mhz.len()),
        ));
    }
    let ratio = series.gap_ratio();
    if !(ratio < T::lit(MAX_GAP_RATIO)) {
        return Err(invalid(
            "t_s",
            format!(
                "largest sampling gap is {ratio:.2}x the median interval (limit {MAX_GAP_RATIO}); \
                 resample onto a uniform grid first"
            ),
        ));
    }
    periodogram(&series.mean_subtracted(), series.median_interval())
}

// ---------------------------------------------------------------------------
// Power laws

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit<T> {
    /// Level at 1 Hz, in the PSD's units.
    #[serde(rename = "M")]
    pub m: T,
    pub mu: T,
    #[serde(rename = "M_se")]
    pub m_se: T,
    pub mu_se: T,
    pub band_hz: (T, T),
    pub bins_used: usize,
    /// Bins in the band with non-positive power, left out of the fit.
    pub excluded_nonpositive: usize,
    /// Added to `ln S` before regression to undo the periodogram's log bias.
    pub log_bias_correction: T,
}

impl<T: Real> PowerLawFit<T> {
    pub fn evaluate(&self, f: T) -> T {
        self.m / f.powf(self.mu)
    }
}

pub const MIN_POWER_LAW_BINS: usize = 10;

/// `E[ln Î] − ln S` for an average of `k` independent periodogram ordinates
/// (each `S χ²₂/2`): `ψ(k) − ln k`.
pub fn periodogram_log_bias(k: usize) -> f64 {
    let k = k.max(1);
    let digamma = -EULER_GAMMA + (1..k).map(|j| 1.0 / j as f64).sum::<f64>();
    digamma - (k as f64).ln()
}

/// Log-log regression `ln S = ln M − µ ln f` over bins with `lo ≤ f ≤ hi`.
pub fn fit_power_law<T: Real>(psd: &SpectralDensity<T>, band: (T, T)) -> Result<PowerLawFit<T>> {
    let (lo, hi) = band;
    if !(lo > T::zero() && hi > lo) {
        return Err(invalid("band", "need 0 < lo < hi"));
    }
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut excluded = 0;
    for (&f, &s) in psd.frequencies.iter().zip(&psd.values) {
        if f < lo || f > hi {
            continue;
        }
        if s > T::zero() {
            x.push(-f.ln());
            y.push(s.ln());
        } else {
            excluded += 1;
        }
    }
    if x.len() < MIN_POWER_LAW_BINS {
        return Err(invalid(
            "band",
            format!("{} usable bins in [{lo}, {hi}] Hz; need at least {MIN_POWER_LAW_BINS}", x.len()),
        ));
    }
    let bias = match psd.estimator {
        Estimator::Periodogram { averages } => T::lit(-periodogram_log_bias(averages)),
        Estimator::Model => T::zero(),
    };
    for v in y.iter_mut() {
        *v = *v + bias;
    }
    let ls = least_squares(&[vec![T::one(); x.len()], x.clone()], &y)?;
    let se = ls.standard_errors();
    let m = ls.coefficients[0].exp();
    Ok(PowerLawFit {
        m,
        mu: ls.coefficients[1],
        m_se: m * se[0],
        mu_se: se[1],
        band_hz: band,
        bins_used: x.len(),
        excluded_nonpositive: excluded,
        log_bias_correction: bias,
    })
}

/// Low-frequency plateau and high-frequency roll-off of a Lorentzian-like PSD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollOff<T> {
    /// Mean PSD over `plateau_band_hz`.
    pub plateau: T,
    pub plateau_band_hz: (T, T),
    /// Where the log-binned PSD first drops to half the plateau.
    pub corner_hz: T,
    /// Log-log slope over `[corner, 10 corner]` (`−µ`).
    pub slope: T,
    pub slope_se: T,
}

/// Plateau level, half-power corner and the slope in the decade above it.
pub fn roll_off<T: Real>(psd: &SpectralDensity<T>, plateau_band: (T, T)) -> Result<RollOff<T>> {
    let (lo, hi) = plateau_band;
    let inside: Vec<T> = psd
        .frequencies
        .iter()
        .zip(&psd.values)
        .filter(|(&f, _)| f >= lo && f <= hi)
        .map(|(_, &s)| s)
        .collect();
    if inside.is_empty() {
        return Err(invalid("plateau_band", "no bins inside the band"));
    }
    let plateau = inside.iter().copied().sum::<T>() / T::from_usize_lossy(inside.len());
    let half = plateau / T::lit(2.0);
    let binned = psd.log_binned(20);
    let mut prev: Option<(T, T)> = None;
    let mut corner = None;
    for &(f, s) in &binned {
        if f <= hi {
            prev = Some((f, s));
            continue;
        }
        if s < half {
            corner = Some(match prev {
                // Log-linear interpolation to the crossing.
                Some((f0, s0)) if s0 > half => {
                    let w = (s0.ln() - half.ln()) / (s0.ln() - s.ln());
                    (f0.ln() + w * (f.ln() - f0.ln())).exp()
                }
                _ => f,
            });
            break;
        }
        prev = Some((f, s));
    }
    let corner = corner.ok_or_else(|| invalid("psd", "never falls to half the plateau"))?;
    let fit = fit_power_law(psd, (corner, corner * T::lit(10.0)))?;
    Ok(RollOff {
        plateau,
        plateau_band_hz: plateau_band,
        corner_hz: corner,
        slope: -fit.mu,
        slope_se: fit.mu_se,
    })
}

// ---------------------------------------------------------------------------
// Flux-noise amplitude

/// `A_Φ = sqrt(M) / |df01/dΦ|` with `M` the 1/f level of the one-sided
/// frequency PSD in MHz²/Hz and the dispersion in GHz/Φ0; returns µΦ0/√Hz.
pub fn flux_amplitude_from_psd<T: Real>(m_mhz2: T, dispersion_ghz_per_phi0: T) -> Result<T> {
    if !(m_mhz2 >= T::zero()) {
        return Err(invalid("M", "must be >= 0"));
    }
    if !(dispersion_ghz_per_phi0.abs() > T::zero()) {
        return Err(invalid(
            "dispersion",
            "zero at a sweet spot; the flux-noise amplitude is not observable there",
        ));
    }
    // MHz / (MHz/Φ0) = Φ0, then to µΦ0.
    Ok(m_mhz2.sqrt() / (dispersion_ghz_per_phi0.abs() * T::lit(1e3)) * T::lit(1e6))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EchoRow<T> {
    pub gamma_phi_e_per_s: T,
    #[serde(rename = "dispersion_GHz_per_phi0")]
    pub dispersion: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxAmplitudeFit<T> {
    #[serde(rename = "A_phi_uPhi0_per_rtHz")]
    pub a_phi: T,
    pub standard_error: T,
    pub rows_used: usize,
    /// Rows within the sweet-spot threshold.
    pub rows_excluded: usize,
}

/// Rows with `|df/dΦ|` below this (GHz/Φ0) carry no flux-noise information.
pub const SWEET_SPOT_DISPERSION: f64 = 0.01;
pub const MIN_ECHO_ROWS: usize = 3;

/// Slope through the origin of `Γ_φE` against `2π |df/dΦ| sqrt(ln 2)`
/// (with unit conversion to µΦ0/√Hz).
pub fn flux_amplitude_from_echo<T: Real>(rows: &[EchoRow<T>]) -> Result<FluxAmplitudeFit<T>> {
    let threshold = T::lit(SWEET_SPOT_DISPERSION);
    let (used, skipped): (Vec<&EchoRow<T>>, Vec<&EchoRow<T>>) = rows.iter().partition(|r| r.dispersion.abs() >= threshold);
    if used.len() < MIN_ECHO_ROWS {
        return Err(Error::Identifiability(format!(
            "{} echo rows away from sweet spots; need at least {MIN_ECHO_ROWS}",
            used.len()
        )));
    }
    for (i, r) in used.iter().enumerate() {
        if !(r.gamma_phi_e_per_s >= T::zero() && r.gamma_phi_e_per_s.is_finite()) {
            return Err(invalid(format!("rows[{i}].gamma_phi_e_per_s"), "must be finite and >= 0"));
        }
    }
    // Γ [1/s] = 2π |d| [GHz/Φ0] · 1e9 · A [µΦ0/√Hz] · 1e-6 · sqrt(ln 2).
    let x: Vec<T> = used
        .iter()
        .map(|r| T::TAU() * r.dispersion.abs() * T::lit(1e3) * T::LN_2().sqrt())
        .collect();
    let y: Vec<T> = used.iter().map(|r| r.gamma_phi_e_per_s).collect();
    let ls = least_squares(&[x], &y)?;
    Ok(FluxAmplitudeFit {
        a_phi: ls.coefficients[0],
        standard_error: ls.standard_errors()[0],
        rows_used: used.len(),
        rows_excluded: skipped.len(),
    })
}

// ---------------------------------------------------------------------------
// Synthetic noise

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Gaussian series of length `n` whose one-sided PSD is `amplitude / f^exponent`
/// (spectral synthesis with complex-Gaussian Fourier coefficients; the DC bin
/// is zero).
pub fn synthetic_power_law<T: Real>(n: usize, dt: T, amplitude: T, exponent: T, seed: RngSeed) -> Result<Vec<T>> {
    if n < 4 {
        return Err(invalid("n", "need at least 4 samples"));
    }
    require_positive("dt", dt)?;
    if !(amplitude >= T::zero()) {
        return Err(invalid("amplitude", "must be >= 0"));
    }
    let mut rng = seed.rng();
    let nn = T::from_usize_lossy(n);
    let df = T::one() / (nn * dt);
    let coeffs: Vec<Complex<T>> = (0..=n / 2)
        .map(|k| {
            if k == 0 {
                return Complex::new(T::zero(), T::zero());
            }
            let f = T::from_usize_lossy(k) * df;
            let s = amplitude / f.powf(exponent);
            // One-sided S_k = 2 dt |X_k|²/n off Nyquist, dt |X_k|²/n at Nyquist.
            if n % 2 == 0 && k == n / 2 {
                Complex::new((s * nn / dt).sqrt() * T::lit(normal(&mut rng)), T::zero())
            } else {
                let sigma = (s * nn / (T::lit(4.0) * dt)).sqrt();
                Complex::new(sigma * T::lit(normal(&mut rng)), sigma * T::lit(normal(&mut rng)))
            }
        })
        .collect();
    let x = inverse_real_dft(coeffs, n)?;
    Ok(x.into_iter().map(|v| v / nn).collect())
}

/// White Gaussian series with one-sided PSD level `level`.
pub fn synthetic_white<T: Real>(n: usize, dt: T, level: T, seed: RngSeed) -> Result<Vec<T>> {
    require_positive("dt", dt)?;
    let sigma = (level / (T::lit(2.0) * dt)).sqrt();
    let mut rng = seed.rng();
    Ok((0..n).map(|_| sigma * T::lit(normal(&mut rng))).collect())
}

/// Symmetric random telegraph signal `±amplitude` switching at `rate` (1/s).
pub fn synthetic_telegraph<T: Real>(n: usize, dt: T, amplitude: T, rate: T, seed: RngSeed) -> Result<Vec<T>> {
    require_positive("dt", dt)?;
    require_positive("rate", rate)?;
    let p = -(-(rate * dt).as_f64()).exp_m1();
    let mut rng = seed.rng();
    let mut level = if rng.gen::<bool>() { amplitude } else { -amplitude };
    Ok((0..n)
        .map(|_| {
            let v = level;
            if rng.gen::<f64>() < p {
                level = -level;
            }
            v
        })
        .collect())
}

/// `f01(t) = f0 + (df/dΦ) Φ(t)` with `Φ(t)` Gaussian 1/f flux noise of
/// one-sided PSD `A_Φ²/f`; `A_Φ` in µΦ0/√Hz, dispersion in GHz/Φ0, output MHz.
pub fn synthetic_flux_noise_series<T: Real>(
    n: usize,
    dt: T,
    a_phi: T,
    dispersion_ghz_per_phi0: T,
    f0_mhz: T,
    seed: RngSeed,
) -> Result<FrequencySeries<T>> {
    let a = a_phi * T::lit(1e-6);
    let flux = synthetic_power_law(n, dt, a * a, T::one(), seed)?;
    let slope = dispersion_ghz_per_phi0 * T::lit(1e3);
    FrequencySeries::uniform(dt, flux.into_iter().map(|phi| f0_mhz + slope * phi).collect())
}
