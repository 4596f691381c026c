//! Monte-Carlo charge-parity switching in the array and the resulting
//! `Re E_CQPS(t)` noise.
//!
//! Island charge is `n_g,j(t) = n_g,j(0) + δn_g,j(t) + N_qp,j(t)/2`. Each
//! quasiparticle hops to a neighbouring island (periodic boundary) with
//! probability `1 − exp(−dt/τ_qp)` per step. Because a half Cooper-pair shift
//! of the cumulative charge just flips the sign of a phase term, a hop changes
//! `E_CQPS` by flipping one term (or, across the boundary, all but the last),
//! which keeps a step O(1) instead of O(N).

use num_complex::Complex;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cqps::{aggregated_phases, total_cqps_energy, wrap_unit, ChargeConfiguration};
use crate::error::{invalid, require_positive, Error, Result};
use crate::numerics::{average_spectra, periodogram_owned, RngSeed, SpectralDensity};
use crate::Real;

/// Full re-summation interval, bounding round-off drift of the running sum.
const RESUM_EVERY: usize = 1 << 16;

fn default_sample_cap() -> usize {
    1 << 28
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real"))]
pub struct SimConfig<T> {
    /// Number of islands (one phase-slip junction per island).
    #[serde(rename = "N")]
    pub islands: usize,
    pub n_qp: usize,
    #[serde(rename = "tau_qp_s")]
    pub tau_qp: T,
    #[serde(rename = "dt_s")]
    pub dt: T,
    #[serde(rename = "duration_s")]
    pub duration: T,
    pub realizations: usize,
    #[serde(default)]
    pub seed: RngSeed,
    #[serde(rename = "eps_ps_GHz")]
    pub eps_ps: T,
    /// Upper bound on `samples × realizations`.
    #[serde(default = "default_sample_cap")]
    pub sample_cap: usize,
}

impl<T: Real> SimConfig<T> {
    /// Q1 array, 10 quasiparticles, τ_qp = 10 ms, 500 µs steps for 10⁴ s,
    /// ten realizations.
    pub fn paper_fig5() -> Self {
        Self {
            islands: 85,
            n_qp: 10,
            tau_qp: T::lit(10e-3),
            dt: T::lit(500e-6),
            duration: T::lit(1e4),
            realizations: 10,
            seed: RngSeed::default(),
            eps_ps: T::one(),
            sample_cap: default_sample_cap(),
        }
    }

    pub fn samples(&self) -> usize {
        (self.duration / self.dt).round().to_usize().unwrap_or(0)
    }

    /// Per-quasiparticle hop probability in one step.
    pub fn hop_probability(&self) -> f64 {
        hop_probability(self.dt.as_f64(), self.tau_qp.as_f64())
    }

    pub fn validate(&self) -> Result<()> {
        if self.islands == 0 {
            return Err(invalid("N", "need at least one island"));
        }
        if self.n_qp > self.islands {
            return Err(invalid("n_qp", format!("{} exceeds N = {}", self.n_qp, self.islands)));
        }
        if self.realizations == 0 {
            return Err(invalid("realizations", "must be >= 1"));
        }
        require_positive("dt_s", self.dt)?;
        require_positive("duration_s", self.duration)?;
        require_positive("eps_ps_GHz", self.eps_ps)?;
        // τ_qp = ∞ is allowed: it freezes the quasiparticles.
        if !(self.tau_qp > T::zero()) {
            return Err(invalid("tau_qp_s", "must be > 0"));
        }
        if !(self.dt < self.tau_qp / T::lit(5.0)) {
            return Err(invalid("dt_s", "must be below tau_qp/5 to resolve switching"));
        }
        let n = self.samples();
        if n < 10_000 {
            return Err(invalid("duration_s", format!("{n} samples; need at least 1e4")));
        }
        let requested = n.saturating_mul(self.realizations);
        if requested > self.sample_cap {
            return Err(Error::MemoryGuard {
                requested,
                cap: self.sample_cap,
            });
        }
        Ok(())
    }
}

/// `1 − exp(−dt/τ)`.
pub fn hop_probability(dt: f64, tau: f64) -> f64 {
    -(-dt / tau).exp_m1()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real"))]
pub struct ParityState<T> {
    /// `n_g,j(0)` for the `N` array islands plus the closing island.
    pub offsets: ChargeConfiguration<T>,
    /// Island index of every quasiparticle.
    pub qp_positions: Vec<usize>,
    /// `N_qp,j`.
    pub qp_counts: Vec<u32>,
    pub time: T,
}

impl<T: Real> ParityState<T> {
    pub fn total_quasiparticles(&self) -> usize {
        self.qp_counts.iter().map(|&c| c as usize).sum()
    }

    /// Island charges `n_g,j(0) + N_qp,j/2` wrapped into `[0, 1)`. The
    /// trailing entry (the closing island, which never enters a phase) is
    /// passed through.
    pub fn island_charges(&self) -> ChargeConfiguration<T> {
        let half = T::lit(0.5);
        let offsets = self.offsets.offsets();
        let mut raw: Vec<T> = offsets
            .iter()
            .zip(&self.qp_counts)
            .map(|(&n, &q)| n + half * T::from_u32(q).expect("small count"))
            .collect();
        raw.push(offsets[offsets.len() - 1]);
        ChargeConfiguration::wrapped(&raw).expect("finite charges")
    }
}

/// One tunneling event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Hop {
    pub from: usize,
    pub to: usize,
}

/// Uniform offsets and `n_qp` quasiparticles on independently drawn islands.
pub fn init_state<T: Real, R: Rng + ?Sized>(cfg: &SimConfig<T>, rng: &mut R) -> ParityState<T> {
    let offsets = ChargeConfiguration::uniform_random(cfg.islands, rng);
    let qp_positions: Vec<usize> = (0..cfg.n_qp).map(|_| rng.gen_range(0..cfg.islands)).collect();
    let mut qp_counts = vec![0u32; cfg.islands];
    for &p in &qp_positions {
        qp_counts[p] += 1;
    }
    ParityState {
        offsets,
        qp_positions,
        qp_counts,
        time: T::zero(),
    }
}

/// Advances one `dt`; hops are appended to `hops` in quasiparticle order.
pub fn step_into<T: Real, R: Rng + ?Sized>(
    state: &mut ParityState<T>,
    cfg: &SimConfig<T>,
    p_hop: f64,
    rng: &mut R,
    hops: &mut Vec<Hop>,
) {
    let n = cfg.islands;
    for pos in state.qp_positions.iter_mut() {
        if rng.gen::<f64>() >= p_hop {
            continue;
        }
        let from = *pos;
        let to = if rng.gen::<bool>() {
            (from + 1) % n
        } else {
            (from + n - 1) % n
        };
        state.qp_counts[from] -= 1;
        state.qp_counts[to] += 1;
        *pos = to;
        hops.push(Hop { from, to });
    }
    state.time = state.time + cfg.dt;
    debug_assert_eq!(state.total_quasiparticles(), cfg.n_qp);
}

pub fn step<T: Real, R: Rng + ?Sized>(state: &mut ParityState<T>, cfg: &SimConfig<T>, rng: &mut R) -> Vec<Hop> {
    let mut hops = Vec::new();
    step_into(state, cfg, cfg.hop_probability(), rng, &mut hops);
    hops
}

/// Running `Σ_j s_j b_j` with `b_j = ε e^{−2πi η_j(0)}` and
/// `s_j = (−1)^{Σ_{k≤j} N_qp,k}`.
struct EnergyTracker<T> {
    base: Vec<Complex<T>>,
    negative: Vec<bool>,
    sum: Complex<T>,
}

impl<T: Real> EnergyTracker<T> {
    fn new(offsets: &ChargeConfiguration<T>, eps: T, counts: &[u32]) -> Self {
        let base = base_terms(offsets, eps);
        let mut cumulative = 0u64;
        let negative = counts
            .iter()
            .map(|&c| {
                cumulative += c as u64;
                cumulative % 2 == 1
            })
            .collect();
        let mut t = Self {
            base,
            negative,
            sum: Complex::new(T::zero(), T::zero()),
        };
        t.resum();
        t
    }

    fn resum(&mut self) {
        self.sum = self
            .base
            .iter()
            .zip(&self.negative)
            .fold(Complex::new(T::zero(), T::zero()), |acc, (&b, &neg)| if neg { acc - b } else { acc + b });
    }

    fn flip(&mut self, j: usize) {
        let b = self.base[j];
        let two = T::lit(2.0);
        if self.negative[j] {
            self.sum = self.sum + b * two;
        } else {
            self.sum = self.sum - b * two;
        }
        self.negative[j] = !self.negative[j];
    }

    fn apply(&mut self, hop: Hop) {
        let n = self.base.len();
        if hop.from == hop.to {
            return;
        }
        let wraps = (hop.from == n - 1 && hop.to == 0) || (hop.from == 0 && hop.to == n - 1);
        if wraps {
            // Cumulative charge shifts by ±1/2 on every junction but the last.
            let last = self.base[n - 1];
            let last = if self.negative[n - 1] { -last } else { last };
            self.sum = last * T::lit(2.0) - self.sum;
            for s in &mut self.negative[..n - 1] {
                *s = !*s;
            }
        } else if hop.to == (hop.from + 1) % n {
            self.flip(hop.from);
        } else {
            self.flip(hop.to);
        }
    }
}

fn base_terms<T: Real>(offsets: &ChargeConfiguration<T>, eps: T) -> Vec<Complex<T>> {
    aggregated_phases(offsets)
        .into_iter()
        .map(|eta| {
            let (s, c) = (T::TAU() * eta).sin_cos();
            Complex::new(eps * c, -eps * s)
        })
        .collect()
}

/// Offset-charge drift `δn_g,j(t)`: fills the slice for time `t` (s).
pub type DriftFn<'a, T> = &'a (dyn Fn(T, &mut [T]) + Sync);

/// Reported context for the quasiparticle population; not a model input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasiparticleContext {
    pub array_volume_um3: f64,
    pub cooper_pair_density_per_um3: f64,
    /// `n_qp / (V n_CP)`.
    pub x_qp: f64,
}

impl QuasiparticleContext {
    pub fn for_count(n_qp: usize) -> Self {
        let v = 6.7;
        let n_cp = 4e6;
        Self {
            array_volume_um3: v,
            cooper_pair_density_per_um3: n_cp,
            x_qp: n_qp as f64 / (v * n_cp),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real"))]
pub struct TraceResult<T> {
    #[serde(rename = "t_s")]
    pub times: Vec<T>,
    /// `Re E_CQPS / ε_ps` of realization 0.
    #[serde(rename = "re_ecqps_over_eps")]
    pub trace: Vec<T>,
    /// Per-realization PSD values on the grid of `psd`, in `ε_ps²/Hz`.
    pub realization_psds: Vec<Vec<T>>,
    /// Mean over realizations, in `ε_ps²/Hz`.
    pub psd: SpectralDensity<T>,
    pub context: QuasiparticleContext,
}

/// Simulates `cfg.realizations` independent evolutions (parallel, one RNG
/// stream each) and averages their PSDs.
pub fn run<T: Real>(cfg: &SimConfig<T>) -> Result<TraceResult<T>> {
    run_with_drift(cfg, None)
}

/// [`run`] with an optional offset-charge drift. With a drift every step costs
/// O(N), as the base phases change.
pub fn run_with_drift<T: Real>(cfg: &SimConfig<T>, drift: Option<DriftFn<'_, T>>) -> Result<TraceResult<T>> {
    cfg.validate()?;
    let mut realizations: Vec<(usize, Vec<T>, SpectralDensity<T>)> = (0..cfg.realizations)
        .into_par_iter()
        .map(|r| {
            let trace = simulate_trace(cfg, r, drift);
            // Only realization 0's trace is kept.
            let (keep, work) = if r == 0 { (trace.clone(), trace) } else { (Vec::new(), trace) };
            let mut psd = periodogram_owned(work, cfg.dt)?;
            if r != 0 {
                psd.frequencies = Vec::new();
            }
            Ok((r, keep, psd))
        })
        .collect::<Result<_>>()?;
    realizations.sort_by_key(|(r, ..)| *r);
    let trace = std::mem::take(&mut realizations[0].1);
    let frequencies = realizations[0].2.frequencies.clone();
    let spectra: Vec<SpectralDensity<T>> = realizations
        .into_iter()
        .map(|(.., mut p)| {
            p.frequencies.clear();
            p
        })
        .collect();
    let mut psd = average_spectra(&spectra)?;
    psd.frequencies = frequencies;
    let realization_psds = spectra.into_iter().map(|p| p.values).collect();
    let times = (0..trace.len()).map(|k| T::from_usize_lossy(k) * cfg.dt).collect();
    Ok(TraceResult {
        times,
        trace,
        realization_psds,
        psd,
        context: QuasiparticleContext::for_count(cfg.n_qp),
    })
}

/// `Re E_CQPS / ε_ps` sampled before each step of realization `index`.
pub fn simulate_trace<T: Real>(cfg: &SimConfig<T>, index: usize, drift: Option<DriftFn<'_, T>>) -> Vec<T> {
    let samples = cfg.samples();
    let mut rng = cfg.seed.stream(index as u64);
    let mut state = init_state(cfg, &mut rng);
    let p_hop = cfg.hop_probability();
    let mut hops = Vec::with_capacity(cfg.n_qp);
    let mut out = Vec::with_capacity(samples);

    match drift {
        None => {
            // Unit ε: the trace is already normalized.
            let mut tracker = EnergyTracker::new(&state.offsets, T::one(), &state.qp_counts);
            for k in 0..samples {
                out.push(tracker.sum.re);
                hops.clear();
                step_into(&mut state, cfg, p_hop, &mut rng, &mut hops);
                for &h in &hops {
                    tracker.apply(h);
                }
                if (k + 1) % RESUM_EVERY == 0 {
                    tracker.resum();
                }
            }
        }
        Some(f) => {
            let eps = vec![T::one(); cfg.islands];
            let half = T::lit(0.5);
            let mut delta = vec![T::zero(); cfg.islands];
            let mut raw = state.offsets.offsets().to_vec();
            for _ in 0..samples {
                f(state.time, &mut delta);
                for (j, r) in raw[..cfg.islands].iter_mut().enumerate() {
                    let q = T::from_u32(state.qp_counts[j]).expect("small count");
                    *r = wrap_unit(state.offsets.offsets()[j] + delta[j] + half * q);
                }
                let charges = ChargeConfiguration::new(raw.clone()).expect("wrapped");
                let e = total_cqps_energy(&eps, &charges).expect("matching lengths");
                out.push(e.value.re);
                hops.clear();
                step_into(&mut state, cfg, p_hop, &mut rng, &mut hops);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(n: usize, n_qp: usize) -> SimConfig<f64> {
        SimConfig {
            islands: n,
            n_qp,
            tau_qp: 10e-3,
            dt: 1e-3,
            duration: 10.0,
            realizations: 2,
            seed: RngSeed(7),
            eps_ps: 1.0,
            sample_cap: default_sample_cap(),
        }
    }

    #[test]
    fn paper_defaults_validate() {
        let c = SimConfig::<f64>::paper_fig5();
        c.validate().unwrap();
        assert_eq!(c.samples(), 20_000_000);
        assert!((c.hop_probability() - (1.0 - (-0.05f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn config_guards() {
        let mut c = small(10, 11);
        assert!(c.validate().is_err());
        c = small(10, 2);
        c.dt = 3e-3;
        assert!(c.validate().is_err());
        c = small(10, 2);
        c.duration = 1.0;
        assert!(c.validate().is_err());
        c = small(10, 2);
        c.sample_cap = 1000;
        assert!(matches!(c.validate(), Err(Error::MemoryGuard { .. })));
    }

    #[test]
    fn half_probability_at_ln2() {
        assert!((hop_probability(std::f64::consts::LN_2, 1.0) - 0.5).abs() < 1e-15);
        assert_eq!(hop_probability(1.0, f64::INFINITY), 0.0);
    }

    #[test]
    fn init_is_deterministic_and_counts() {
        let c = small(85, 10);
        let a = init_state(&c, &mut c.seed.rng());
        let b = init_state(&c, &mut c.seed.rng());
        assert_eq!(a, b);
        assert_eq!(a.total_quasiparticles(), 10);
        let z = init_state(&small(85, 0), &mut c.seed.rng());
        assert!(z.qp_counts.iter().all(|&q| q == 0));
    }

    #[test]
    fn frozen_quasiparticles_never_move() {
        let mut c = small(12, 4);
        c.tau_qp = f64::INFINITY;
        let mut rng = c.seed.rng();
        let mut s = init_state(&c, &mut rng);
        let start = s.qp_counts.clone();
        for _ in 0..10_000 {
            assert!(step(&mut s, &c, &mut rng).is_empty());
        }
        assert_eq!(s.qp_counts, start);
    }

    #[test]
    fn incremental_energy_matches_full_sum() {
        for n in [1usize, 2, 3, 17] {
            let mut c = small(n, n.min(5));
            c.dt = 1e-3;
            c.tau_qp = 2e-3;
            let mut rng = RngSeed(n as u64).rng();
            let mut s = init_state(&c, &mut rng);
            let mut t = EnergyTracker::new(&s.offsets, 1.0, &s.qp_counts);
            let ones = vec![1.0; n];
            for _ in 0..2000 {
                for h in step(&mut s, &c, &mut rng) {
                    t.apply(h);
                }
                let full = total_cqps_energy(&ones, &s.island_charges()).unwrap().value;
                assert!((t.sum - full).norm() < 1e-9, "n = {n}");
            }
        }
    }

    #[test]
    fn occupation_is_uniform() {
        // One walker on a ten-island ring, sampled every 100 steps (well past
        // the mixing time) for 10⁶ steps; χ² with 9 dof, 0.1% critical value.
        let mut c = small(10, 1);
        c.dt = std::f64::consts::LN_2;
        c.tau_qp = 1.0;
        let mut rng = RngSeed(99).rng();
        let mut s = init_state(&c, &mut rng);
        let mut hist = [0f64; 10];
        for k in 0..1_000_000 {
            step(&mut s, &c, &mut rng);
            if k % 100 == 0 {
                hist[s.qp_positions[0]] += 1.0;
            }
        }
        let expected = hist.iter().sum::<f64>() / 10.0;
        let chi2: f64 = hist.iter().map(|h| (h - expected).powi(2) / expected).sum();
        assert!(chi2 < 27.88, "chi2 = {chi2}");
    }

    #[test]
    fn trace_bounded_and_deterministic() {
        let c = small(20, 3);
        let a = run(&c).unwrap();
        let b = run(&c).unwrap();
        assert_eq!(a, b);
        assert!(a.trace.iter().all(|v| v.abs() <= 20.0 + 1e-9));
        assert_eq!(a.realization_psds.len(), 2);
    }

    #[test]
    fn no_quasiparticles_no_noise() {
        let r = run(&small(20, 0)).unwrap();
        assert!(r.trace.windows(2).all(|w| w[0] == w[1]));
        assert!(r.psd.values.iter().all(|&v| v < 1e-20));
    }

    #[test]
    fn zero_drift_matches_incremental() {
        let c = small(15, 4);
        let zero = |_t: f64, d: &mut [f64]| d.fill(0.0);
        let with = simulate_trace(&c, 1, Some(&zero));
        let without = simulate_trace(&c, 1, None);
        for (a, b) in with.iter().zip(&without) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn context_reports_paper_fraction() {
        let x = QuasiparticleContext::for_count(10).x_qp;
        assert!((x - 3.73e-7).abs() < 1e-9);
    }
}
