//! Fully resolved pipeline runs. A `Job` holds everything a run depends on
//! except data files, which are referenced by path and pinned by digest.

use std::io::Write;
use std::path::{Path, PathBuf};

use cqps_core::analysis::{
    fit_power_law, fit_ramsey, fit_spectrum, flux_amplitude_from_echo, flux_amplitude_from_psd, frequency_psd,
    FrequencySeries, PowerLawFit, RamseyFitOptions, RamseyTrace, SpectroscopyDataset, SpectrumFitOptions,
};
use cqps_core::circuit::FluxoniumParams;
use cqps_core::cqps::cqps_rate_sweep;
use cqps_core::dephasing::{coherence_vs_flux, QubitModel};
use cqps_core::design::{run_sweep, SweepOptions, SweepSpec};
use cqps_core::numerics::SpectralDensity;
use cqps_core::paritysim::{run, SimConfig};
use cqps_core::phaseslip::{band_fourier_amplitudes, charge_bands, wkb_amplitude, BandConfig, PhaseSlipMethod};
use cqps_core::spectrum::{flux_sweep, BasisConfig, GridSpec};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::inputs::{read_echo_rows, read_psd, Band, Range};
use crate::manifest::Sink;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "job", rename_all = "kebab-case")]
pub enum Job {
    Spectrum {
        label: String,
        params: FluxoniumParams<f64>,
        phi: Range,
        basis: BasisConfig,
    },
    CqpsRate {
        label: String,
        params: FluxoniumParams<f64>,
        #[serde(rename = "eps_ps_GHz")]
        epsilons: Vec<f64>,
        phi: Range,
        basis: BasisConfig,
        grid: GridSpec,
    },
    Coherence {
        qubit: QubitModel<f64>,
        phi: Range,
        basis: BasisConfig,
        grid: GridSpec,
        dispersion_step: f64,
    },
    PsAmplitudes {
        ratios: Range,
        l_max: usize,
        bands: BandConfig,
    },
    SimulateParity {
        config: SimConfig<f64>,
        trace_stride: usize,
    },
    FitSpectrum {
        input: PathBuf,
        start: FluxoniumParams<f64>,
        options: SpectrumFitOptions,
    },
    FitRamsey {
        input: PathBuf,
        /// `None` drops the T1 factor.
        t1_us: Option<f64>,
        options: RamseyFitOptions,
    },
    FitPsd {
        input: PathBuf,
        band: Option<Band>,
        #[serde(rename = "dispersion_GHz_per_phi0")]
        dispersion: Option<f64>,
    },
    FitPowerlaw {
        input: PathBuf,
        band: Option<Band>,
        /// Periodograms averaged into the input; sets the log-bias correction.
        averages: Option<usize>,
    },
    FitFluxamp {
        input: PathBuf,
    },
    Sweep {
        spec: SweepSpec<f64>,
        options: SweepOptions,
    },
    Psd {
        input: PathBuf,
    },
}

impl Job {
    pub fn subcommand(&self) -> &'static str {
        match self {
            Job::Spectrum { .. } => "spectrum",
            Job::CqpsRate { .. } => "cqps-rate",
            Job::Coherence { .. } => "coherence",
            Job::PsAmplitudes { .. } => "ps-amplitudes",
            Job::SimulateParity { .. } => "simulate-parity",
            Job::FitSpectrum { .. }
            | Job::FitRamsey { .. }
            | Job::FitPsd { .. }
            | Job::FitPowerlaw { .. }
            | Job::FitFluxamp { .. } => "fit",
            Job::Sweep { .. } => "sweep",
            Job::Psd { .. } => "psd",
        }
    }

    /// Seed of the stochastic parts, if any.
    pub fn seed(&self) -> Option<u64> {
        match self {
            Job::SimulateParity { config, .. } => Some(config.seed.0),
            Job::FitSpectrum { options, .. } => Some(options.seed.0),
            Job::FitRamsey { options, .. } => options.bootstrap.map(|b| b.seed.0),
            _ => None,
        }
    }

    /// Data file read at execution time.
    pub fn data_input(&self) -> Option<&Path> {
        match self {
            Job::FitSpectrum { input, .. }
            | Job::FitRamsey { input, .. }
            | Job::FitPsd { input, .. }
            | Job::FitPowerlaw { input, .. }
            | Job::FitFluxamp { input }
            | Job::Psd { input } => Some(input),
            _ => None,
        }
    }

    pub fn execute(&self, sink: &mut Sink) -> Result<()> {
        match self {
            Job::Spectrum { params, phi, basis, .. } => {
                let rows = flux_sweep(params, basis, &phi.values())?;
                sink.emit("spectrum.csv", true, |w| write_csv(w, &rows))
            }
            Job::CqpsRate {
                params,
                epsilons,
                phi,
                basis,
                grid,
                ..
            } => {
                let rows = cqps_rate_sweep(params, epsilons, &phi.values(), basis, grid)?;
                sink.emit("cqps_rate.csv", true, |w| write_csv(w, &rows))
            }
            Job::Coherence {
                qubit,
                phi,
                basis,
                grid,
                dispersion_step,
            } => {
                let rows = coherence_vs_flux(qubit, &phi.values(), basis, grid, *dispersion_step)?;
                sink.emit("coherence.csv", true, |w| write_csv(w, &rows))
            }
            Job::PsAmplitudes { ratios, l_max, bands } => {
                let rows = ps_amplitude_rows(ratios, *l_max, bands)?;
                sink.emit("ps_amplitudes.csv", true, |w| write_csv(w, &rows))
            }
            Job::SimulateParity { config, trace_stride } => {
                let result = run(config)?;
                let stride = (*trace_stride).max(1);
                sink.emit("trace.csv", false, |w| {
                    let rows = result
                        .times
                        .iter()
                        .zip(&result.trace)
                        .step_by(stride)
                        .map(|(&t_s, &re_ecqps_over_eps)| TraceRow { t_s, re_ecqps_over_eps });
                    write_csv(w, rows)
                })?;
                sink.emit("psd.csv", true, |w| write_psd(w, &result.psd, PsdUnits::Eps2))?;
                sink.emit("summary.json", false, |w| {
                    let summary = ParitySummary {
                        samples: result.trace.len(),
                        realizations: config.realizations,
                        hop_probability: config.hop_probability(),
                        context: &result.context,
                    };
                    write_json(w, &summary)
                })
            }
            Job::FitSpectrum { input, start, options } => {
                let bytes = sink.read_input(input)?;
                let data = SpectroscopyDataset::read_csv(bytes.as_slice())?;
                let fit = fit_spectrum(&data, start, options)?;
                sink.emit("fit.json", true, |w| write_json(w, &fit))
            }
            Job::FitRamsey { input, t1_us, options } => {
                let bytes = sink.read_input(input)?;
                let trace = RamseyTrace::read_csv(bytes.as_slice(), t1_us.unwrap_or(f64::INFINITY))?;
                let fit = fit_ramsey(&trace, options)?;
                sink.emit("fit.json", true, |w| write_json(w, &fit))
            }
            Job::FitPsd { input, band, dispersion } => {
                let bytes = sink.read_input(input)?;
                let series = FrequencySeries::read_csv(bytes.as_slice())?;
                let psd = frequency_psd(&series)?;
                let fit = fit_power_law(&psd, resolve_band(&psd, *band)?)?;
                let a_phi = dispersion.map(|d| flux_amplitude_from_psd(fit.m, d)).transpose()?;
                sink.emit("psd.csv", false, |w| write_psd(w, &psd, PsdUnits::Mhz2))?;
                sink.emit("fit.json", true, |w| {
                    write_json(
                        w,
                        &PsdReport {
                            samples: psd.samples,
                            resolution_hz: psd.resolution(),
                            power_law: &fit,
                            dispersion_ghz_per_phi0: *dispersion,
                            a_phi,
                        },
                    )
                })
            }
            Job::FitPowerlaw { input, band, averages } => {
                let bytes = sink.read_input(input)?;
                let mut psd = read_psd(&bytes, input)?;
                if let Some(k) = averages {
                    if *k == 0 {
                        return Err(CliError::config("--averages", "must be >= 1"));
                    }
                    psd.estimator = cqps_core::numerics::Estimator::Periodogram { averages: *k };
                }
                let fit = fit_power_law(&psd, resolve_band(&psd, *band)?)?;
                sink.emit("fit.json", true, |w| write_json(w, &fit))
            }
            Job::FitFluxamp { input } => {
                let bytes = sink.read_input(input)?;
                let rows = read_echo_rows(&bytes, input)?;
                let fit = flux_amplitude_from_echo(&rows)?;
                sink.emit("fit.json", true, |w| write_json(w, &fit))
            }
            Job::Sweep { spec, options } => {
                let result = run_sweep(spec, options)?;
                sink.emit("sweep.csv", true, |w| Ok(result.write_long_csv(w)?))?;
                sink.emit("sweep_grid.csv", false, |w| Ok(result.write_grid_csv(w)?))
            }
            Job::Psd { input } => {
                let bytes = sink.read_input(input)?;
                let series = FrequencySeries::read_csv(bytes.as_slice())?;
                let psd = frequency_psd(&series)?;
                sink.emit("psd.csv", true, |w| write_psd(w, &psd, PsdUnits::Mhz2))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeRow {
    pub ejec_ratio: f64,
    pub l: usize,
    #[serde(rename = "eps_ps_over_EC")]
    pub eps_ps_over_ec: f64,
    pub method: String,
}

/// WKB (`l = 1`) and ground-band Fourier amplitudes (`l = 1..=l_max`) with
/// `E_C = 1`, so amplitudes come out in units of `E_C`.
pub fn ps_amplitude_rows(ratios: &Range, l_max: usize, cfg: &BandConfig) -> Result<Vec<AmplitudeRow>> {
    if l_max == 0 {
        return Err(CliError::config("--l-max", "must be >= 1"));
    }
    let values = ratios.values();
    if let Some(r) = values.iter().find(|r| !(**r > 0.0)) {
        return Err(CliError::config("--ratios", format!("E_J/E_C must be > 0, got {r}")));
    }
    let per_ratio: Vec<Vec<AmplitudeRow>> = values
        .par_iter()
        .map(|&ratio| {
            let bands = charge_bands(ratio, 1.0, cfg)?;
            let mut rows = vec![AmplitudeRow {
                ejec_ratio: ratio,
                l: 1,
                eps_ps_over_ec: wkb_amplitude(ratio, 1.0),
                method: PhaseSlipMethod::Wkb.as_str().into(),
            }];
            rows.extend(
                band_fourier_amplitudes(&bands.k, &bands.bands[0], 0, l_max)?
                    .into_iter()
                    .map(|a| AmplitudeRow {
                        ejec_ratio: ratio,
                        l: a.order,
                        eps_ps_over_ec: a.value,
                        method: a.method.as_str().into(),
                    }),
            );
            Ok(rows)
        })
        .collect::<cqps_core::Result<_>>()?;
    Ok(per_ratio.into_iter().flatten().collect())
}

fn resolve_band(psd: &SpectralDensity<f64>, band: Option<Band>) -> Result<(f64, f64)> {
    if let Some(b) = band {
        return Ok((b.lo, b.hi));
    }
    let positive: Vec<f64> = psd.frequencies.iter().copied().filter(|&f| f > 0.0).collect();
    match (positive.first(), positive.last()) {
        (Some(&lo), Some(&hi)) if hi > lo => Ok((lo, hi)),
        _ => Err(CliError::config("--band", "PSD has no positive-frequency span; give the band explicitly")),
    }
}

#[derive(Serialize)]
struct TraceRow {
    t_s: f64,
    re_ecqps_over_eps: f64,
}

#[derive(Serialize)]
struct ParitySummary<'a> {
    samples: usize,
    realizations: usize,
    hop_probability: f64,
    context: &'a cqps_core::paritysim::QuasiparticleContext,
}

#[derive(Serialize)]
struct PsdReport<'a> {
    samples: usize,
    #[serde(rename = "resolution_Hz")]
    resolution_hz: f64,
    power_law: &'a PowerLawFit<f64>,
    #[serde(rename = "dispersion_GHz_per_phi0")]
    dispersion_ghz_per_phi0: Option<f64>,
    #[serde(rename = "A_phi_uPhi0_per_rtHz")]
    a_phi: Option<f64>,
}

enum PsdUnits {
    /// Parity-switching noise normalised by `ε_ps²`.
    Eps2,
    /// Frequency noise of `f01` in MHz.
    Mhz2,
}

fn write_psd(w: &mut dyn Write, psd: &SpectralDensity<f64>, units: PsdUnits) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "f_Hz",
        match units {
            PsdUnits::Eps2 => "S_over_eps2_per_Hz",
            PsdUnits::Mhz2 => "S_MHz2_per_Hz",
        },
    ])?;
    for (f, s) in psd.frequencies.iter().zip(&psd.values) {
        out.serialize((f, s))?;
    }
    out.flush()?;
    Ok(())
}

fn write_csv<S: Serialize>(w: &mut dyn Write, rows: impl IntoIterator<Item = S>) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for row in rows {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}

fn write_json<S: Serialize>(w: &mut dyn Write, value: &S) -> Result<()> {
    serde_json::to_writer_pretty(&mut *w, value).map_err(|e| CliError::Io(e.to_string()))?;
    writeln!(w)?;
    Ok(())
}
