mod error;
mod inputs;
mod jobs;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cqps_core::analysis::{Bootstrap, RamseyFitOptions, SpectrumFitOptions};
use cqps_core::circuit::FluxoniumParams;
use cqps_core::design::{SweepOptions, SweepSpec};
use cqps_core::numerics::RngSeed;
use cqps_core::paritysim::SimConfig;
use cqps_core::phaseslip::BandConfig;
use cqps_core::presets::load_qubit_preset;
use cqps_core::spectrum::{BasisConfig, GridSpec};

use error::{CliError, Result, EXIT_USAGE};
use inputs::{parse_json, Band, Energies, QubitFile, QubitSource, Range, ResolvedQubit};
use jobs::Job;
use manifest::{sha256_file, RunManifest, Sink, MANIFEST_FILE};

/// Fluxonium spectra, phase-slip dephasing and parity-noise pipelines.
///
/// With `--out DIR` every output and a `manifest.json` go to DIR. Without it
/// the primary table goes to stdout and the manifest to stderr.
#[derive(Debug, Parser)]
#[command(name = "cqps", version, about)]
struct Cli {
    /// Seed for stochastic pipelines.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Print the resolved job as JSON and stop.
    #[arg(long, global = true)]
    dry_run: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Lowest transition frequencies versus external flux.
    Spectrum {
        #[command(flatten)]
        qubit: QubitArgs,
        /// Flux grid in Φ0, `start:stop:points`.
        #[arg(long, default_value = "0:1:201")]
        phi: Range,
        #[command(flatten)]
        basis: BasisArgs,
    },
    /// Ramsey dephasing times from phase slips and flux noise versus flux.
    Coherence {
        #[command(flatten)]
        qubit: QubitArgs,
        #[arg(long, default_value = "0:1:101")]
        phi: Range,
        #[command(flatten)]
        basis: BasisArgs,
        /// Finite-difference flux step for df01/dΦ, in Φ0.
        #[arg(long, default_value_t = 1e-4)]
        dispersion_step: f64,
    },
    /// Phase-slip linewidth and dephasing rate versus flux.
    CqpsRate {
        #[command(flatten)]
        qubit: QubitArgs,
        #[arg(long, default_value = "0:1:101")]
        phi: Range,
        #[command(flatten)]
        basis: BasisArgs,
    },
    /// Single-junction phase-slip amplitudes in units of E_C.
    PsAmplitudes {
        /// E_J/E_C grid, `start:stop:points`.
        #[arg(long, default_value = "1:60:60")]
        ratios: Range,
        /// Highest slip order from the band Fourier series.
        #[arg(long, default_value_t = 2)]
        l_max: usize,
        /// Quasi-charge samples per band.
        #[arg(long, default_value_t = 201)]
        n_k: usize,
        /// Charge states in the band calculation (odd).
        #[arg(long, default_value_t = 41)]
        n_charge: usize,
    },
    /// Monte-Carlo quasiparticle parity switching and its noise spectrum.
    SimulateParity(ParityArgs),
    /// Fit measured or synthetic data.
    Fit(FitArgs),
    /// Design-space map over two parameters.
    Sweep {
        /// Sweep description (JSON).
        #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
        spec: Option<PathBuf>,
        /// Built-in sweep: fig6a, fig6b, fig6c or fig6d.
        #[arg(long)]
        preset: Option<String>,
        /// Points per axis for a built-in sweep.
        #[arg(long, default_value_t = 61, requires = "preset")]
        points: usize,
    },
    /// Noise spectrum of a frequency series (`t_s,f01_MHz`).
    Psd { input: PathBuf },
    /// Re-run a manifest and check the outputs match bit for bit.
    Replay { manifest: PathBuf },
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct QubitArgs {
    /// Qubit file (JSON with E_J_GHz, E_C_GHz, E_L_GHz, ...).
    #[arg(long)]
    params: Option<PathBuf>,
    /// Device table row, Q1..Q6.
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Debug, Args)]
struct BasisArgs {
    /// Oscillator basis dimension.
    #[arg(long, default_value_t = BasisConfig::default().dimension)]
    basis_dim: usize,
    /// Skip the doubled-basis convergence check.
    #[arg(long)]
    no_convergence_check: bool,
}

impl BasisArgs {
    fn config(&self) -> BasisConfig {
        BasisConfig {
            dimension: self.basis_dim,
            check_convergence: !self.no_convergence_check,
            ..BasisConfig::default()
        }
    }
}

#[derive(Debug, Args)]
struct ParityArgs {
    /// Starting configuration; flags below override its fields.
    #[arg(long, default_value = "paper-fig5")]
    preset: String,
    /// Islands (array junctions).
    #[arg(long = "islands", short = 'N')]
    islands: Option<usize>,
    #[arg(long)]
    n_qp: Option<usize>,
    #[arg(long)]
    tau_qp_s: Option<f64>,
    #[arg(long)]
    dt_s: Option<f64>,
    #[arg(long)]
    duration_s: Option<f64>,
    #[arg(long)]
    realizations: Option<usize>,
    #[arg(long = "eps-ps-ghz")]
    eps_ps: Option<f64>,
    /// Upper bound on samples x realizations.
    #[arg(long)]
    sample_cap: Option<usize>,
    /// Keep every k-th sample in trace.csv.
    #[arg(long, default_value_t = 1)]
    trace_stride: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FitKind {
    Spectrum,
    Ramsey,
    Psd,
    Powerlaw,
    Fluxamp,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[arg(long, value_enum)]
    kind: FitKind,
    /// Input CSV.
    input: PathBuf,
    /// Spectrum: starting energies `E_J,E_C,E_L` in GHz.
    #[arg(long, conflicts_with = "preset")]
    start: Option<Energies>,
    /// Spectrum: start from a device table row.
    #[arg(long)]
    preset: Option<String>,
    /// Spectrum: optimizer starts.
    #[arg(long, default_value_t = 3)]
    starts: usize,
    /// Ramsey: separately measured T1 in µs (omit to drop the T1 factor).
    #[arg(long)]
    t1_us: Option<f64>,
    /// Spectrum, Ramsey: residual-bootstrap resamples for error bars.
    #[arg(long)]
    bootstrap: Option<usize>,
    /// PSD, power law: fit band `lo:hi` in Hz (default: all nonzero bins).
    #[arg(long)]
    band: Option<Band>,
    /// PSD: df01/dΦ in GHz/Φ0, to convert the level into A_Φ.
    #[arg(long = "dispersion-ghz-per-phi0")]
    dispersion: Option<f64>,
    /// Power law: periodograms averaged into the input.
    #[arg(long)]
    averages: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cqps: {}: {e}", e.label());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Io(e.to_string()))?;
    }
    let seed = cli.seed.map(RngSeed).unwrap_or_default();
    let mut sink = Sink::new(if cli.dry_run { None } else { cli.out.clone() })?;

    if let Command::Replay { manifest } = &cli.command {
        return replay(manifest, sink);
    }
    let job = resolve(cli.command, seed, &mut sink)?;
    if cli.dry_run {
        let text = serde_json::to_string_pretty(&job).map_err(|e| CliError::Io(e.to_string()))?;
        println!("{text}");
        return Ok(());
    }
    execute(job, sink).map(|_| ())
}

/// Runs `job` and writes its manifest.
fn execute(job: Job, mut sink: Sink) -> Result<RunManifest> {
    let started = Instant::now();
    job.execute(&mut sink)?;
    let manifest = RunManifest {
        subcommand: job.subcommand().to_string(),
        seed: job.seed(),
        config: job,
        version: env!("CARGO_PKG_VERSION").to_string(),
        threads: rayon::current_num_threads(),
        inputs: sink.inputs.clone(),
        outputs: sink.outputs.clone(),
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Io(e.to_string()))?;
    match sink.dir() {
        Some(dir) => std::fs::write(dir.join(MANIFEST_FILE), text + "\n")?,
        None => eprintln!("{text}"),
    }
    Ok(manifest)
}

fn replay(path: &Path, sink: Sink) -> Result<()> {
    let recorded = RunManifest::read(path)?;
    if let Some(input) = recorded.config.data_input() {
        let name = input.display().to_string();
        let want = recorded
            .inputs
            .iter()
            .find(|d| d.path == name)
            .ok_or_else(|| CliError::config("inputs", format!("no digest recorded for {name}")))?;
        let got = sha256_file(input)?;
        if got != want.sha256 {
            return Err(CliError::config("inputs", format!("{name} changed since the recorded run")));
        }
    }
    let fresh = execute(recorded.config.clone(), sink)?;
    for out in &fresh.outputs {
        if let Some(old) = recorded.outputs.iter().find(|o| o.path == out.path) {
            if old.sha256 != out.sha256 {
                return Err(CliError::Diverged(format!("{} differs from the recorded run", out.path)));
            }
        }
    }
    Ok(())
}

fn qubit_source(args: &QubitArgs, sink: &mut Sink) -> Result<QubitSource> {
    match (&args.params, &args.preset) {
        (Some(path), _) => {
            let bytes = sink.read_input(path)?;
            Ok(QubitSource::File(parse_json::<QubitFile>(&bytes, &path.display().to_string())?))
        }
        (None, Some(name)) => Ok(QubitSource::Preset(name.clone())),
        (None, None) => Err(CliError::Usage("give --params FILE or --preset NAME".into())),
    }
}

fn absolute(path: PathBuf) -> Result<PathBuf> {
    std::path::absolute(&path).map_err(|e| CliError::missing_file(&path, &e))
}

/// Turns parsed flags into a self-contained job.
fn resolve(command: Command, seed: RngSeed, sink: &mut Sink) -> Result<Job> {
    let grid = GridSpec::default();
    Ok(match command {
        Command::Spectrum { qubit, phi, basis } => {
            let q = ResolvedQubit::resolve(&qubit_source(&qubit, sink)?)?;
            Job::Spectrum {
                label: q.label,
                params: q.params,
                phi,
                basis: basis.config(),
            }
        }
        Command::CqpsRate { qubit, phi, basis } => {
            let q = ResolvedQubit::resolve(&qubit_source(&qubit, sink)?)?;
            Job::CqpsRate {
                epsilons: q.require_epsilons()?,
                label: q.label,
                params: q.params,
                phi,
                basis: basis.config(),
                grid,
            }
        }
        Command::Coherence {
            qubit,
            phi,
            basis,
            dispersion_step,
        } => {
            let q = ResolvedQubit::resolve(&qubit_source(&qubit, sink)?)?;
            if !(dispersion_step > 0.0 && dispersion_step < 0.1) {
                return Err(CliError::config("--dispersion-step", "must lie in (0, 0.1) Φ0"));
            }
            Job::Coherence {
                qubit: q.model()?,
                phi,
                basis: basis.config(),
                grid,
                dispersion_step,
            }
        }
        Command::PsAmplitudes {
            ratios,
            l_max,
            n_k,
            n_charge,
        } => Job::PsAmplitudes {
            ratios,
            l_max,
            bands: BandConfig {
                n_k,
                n_charge,
                bands: BandConfig::default().bands,
            },
        },
        Command::SimulateParity(a) => {
            let mut config = match a.preset.as_str() {
                "paper-fig5" => SimConfig::<f64>::paper_fig5(),
                other => return Err(CliError::config("--preset", format!("unknown preset `{other}`; expected paper-fig5"))),
            };
            config.seed = seed;
            macro_rules! set {
                ($($field:ident = $flag:expr),*) => {$(if let Some(v) = $flag { config.$field = v; })*};
            }
            set!(
                islands = a.islands,
                n_qp = a.n_qp,
                tau_qp = a.tau_qp_s,
                dt = a.dt_s,
                duration = a.duration_s,
                realizations = a.realizations,
                eps_ps = a.eps_ps,
                sample_cap = a.sample_cap
            );
            config.validate()?;
            Job::SimulateParity {
                config,
                trace_stride: a.trace_stride,
            }
        }
        Command::Fit(a) => resolve_fit(a, seed)?,
        Command::Sweep { spec, preset, points } => {
            let spec = match (spec, preset) {
                (Some(path), _) => {
                    let bytes = sink.read_input(&path)?;
                    let spec: SweepSpec<f64> = parse_json(&bytes, &path.display().to_string())?;
                    spec.validate()?;
                    spec
                }
                (None, Some(name)) => SweepSpec::preset(&name, points)?,
                (None, None) => return Err(CliError::Usage("give --spec FILE or --preset NAME".into())),
            };
            Job::Sweep {
                spec,
                options: SweepOptions::default(),
            }
        }
        Command::Psd { input } => Job::Psd { input: absolute(input)? },
        Command::Replay { .. } => unreachable!("handled before resolution"),
    })
}

fn resolve_fit(a: FitArgs, seed: RngSeed) -> Result<Job> {
    let input = absolute(a.input)?;
    let bootstrap = a.bootstrap.map(|resamples| Bootstrap { resamples, seed });
    Ok(match a.kind {
        FitKind::Spectrum => {
            let start = match (a.start, &a.preset) {
                (Some(Energies([e_j, e_c, e_l])), _) => FluxoniumParams::new(e_j, e_c, e_l)?,
                (None, Some(name)) => load_qubit_preset::<f64>(name)?.params(),
                (None, None) => return Err(CliError::Usage("spectrum fits need --start or --preset".into())),
            };
            Job::FitSpectrum {
                input,
                start,
                options: SpectrumFitOptions {
                    starts: a.starts,
                    seed,
                    bootstrap,
                    ..SpectrumFitOptions::default()
                },
            }
        }
        FitKind::Ramsey => {
            if let Some(t1) = a.t1_us {
                if !(t1 > 0.0) {
                    return Err(CliError::config("--t1-us", "must be > 0"));
                }
            }
            Job::FitRamsey {
                input,
                t1_us: a.t1_us,
                options: RamseyFitOptions {
                    bootstrap,
                    ..RamseyFitOptions::default()
                },
            }
        }
        FitKind::Psd => Job::FitPsd {
            input,
            band: a.band,
            dispersion: a.dispersion,
        },
        FitKind::Powerlaw => Job::FitPowerlaw {
            input,
            band: a.band,
            averages: a.averages,
        },
        FitKind::Fluxamp => Job::FitFluxamp { input },
    })
}
