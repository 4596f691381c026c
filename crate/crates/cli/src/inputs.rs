//! Turning flags and input files into fully resolved model inputs.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use cqps_core::circuit::{ArraySpec, FluxoniumParams};
use cqps_core::cqps::junction_epsilons;
use cqps_core::dephasing::{FluxNoiseModel, QubitModel};
use cqps_core::numerics::SpectralDensity;
use cqps_core::presets::{load_qubit_preset, table1};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// `start:stop:points`, evenly spaced with both ends included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl Range {
    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.start];
        }
        let last = (self.points - 1) as f64;
        (0..self.points)
            .map(|i| match i {
                0 => self.start,
                i if i == self.points - 1 => self.stop,
                i => self.start + (self.stop - self.start) * (i as f64 / last),
            })
            .collect()
    }
}

impl FromStr for Range {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, n] = parts[..] else {
            return Err(format!("expected start:stop:points, got `{s}`"));
        };
        let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}"));
        let (start, stop) = (num(a)?, num(b)?);
        let points: usize = n.trim().parse().map_err(|e| format!("`{n}`: {e}"))?;
        if !start.is_finite() || !stop.is_finite() {
            return Err("range ends must be finite".into());
        }
        if points == 0 || (points == 1 && start != stop) {
            return Err("need at least 2 points, or 1 point with start == stop".into());
        }
        Ok(Range { start, stop, points })
    }
}

impl fmt::Display for Range {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.start, self.stop, self.points)
    }
}

/// `lo:hi`, in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
}

impl FromStr for Band {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (a, b) = s.split_once(':').ok_or_else(|| format!("expected lo:hi, got `{s}`"))?;
        let lo: f64 = a.trim().parse().map_err(|e| format!("`{a}`: {e}"))?;
        let hi: f64 = b.trim().parse().map_err(|e| format!("`{b}`: {e}"))?;
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err("need 0 < lo < hi".into());
        }
        Ok(Band { lo, hi })
    }
}

/// Three comma-separated energies `E_J,E_C,E_L` in GHz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Energies(pub [f64; 3]);

impl FromStr for Energies {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let v: Vec<f64> = s
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}")))
            .collect::<std::result::Result<_, _>>()?;
        let [a, b, c] = v[..] else {
            return Err(format!("expected E_J,E_C,E_L, got `{s}`"));
        };
        Ok(Energies([a, b, c]))
    }
}

/// Qubit description file. Only the energies are required; the array and
/// flux-noise fields are needed by the dephasing pipelines.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QubitFile {
    #[serde(default)]
    pub label: Option<String>,
    #[serde(rename = "E_J_GHz")]
    pub e_j: f64,
    #[serde(rename = "E_C_GHz")]
    pub e_c: f64,
    #[serde(rename = "E_L_GHz")]
    pub e_l: f64,
    #[serde(default)]
    pub array: Option<ArraySpec<f64>>,
    /// Homogeneous shortcut for `array`: junction count and `ε_ps`.
    #[serde(rename = "N", default)]
    pub count: Option<usize>,
    #[serde(rename = "eps_ps_GHz", default)]
    pub eps_ps: Option<f64>,
    #[serde(rename = "A_phi_uPhi0_per_rtHz", default)]
    pub a_phi: Option<f64>,
}

/// Parses JSON, reporting the path of the offending field.
pub fn parse_json<T: DeserializeOwned>(bytes: &[u8], what: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let field = if path == "." { what.to_string() } else { format!("{what}:{path}") };
        CliError::config(field, e.into_inner().to_string())
    })
}

/// Where the qubit comes from.
pub enum QubitSource {
    Preset(String),
    File(QubitFile),
}

pub struct ResolvedQubit {
    pub label: String,
    pub params: FluxoniumParams<f64>,
    /// Per-junction `ε_ps` (GHz), when known.
    pub epsilons: Option<Vec<f64>>,
    pub a_phi: Option<f64>,
}

impl ResolvedQubit {
    pub fn resolve(source: &QubitSource) -> Result<Self> {
        match source {
            QubitSource::Preset(name) => {
                let spec = load_qubit_preset::<f64>(name)?;
                let array = spec.array_from_inductance(&table1::<f64>().process)?;
                let model = spec.qubit_model(&array)?;
                Ok(Self {
                    label: model.label,
                    params: model.params,
                    epsilons: Some(model.epsilons),
                    a_phi: Some(spec.a_phi),
                })
            }
            QubitSource::File(f) => {
                let params = FluxoniumParams::new(f.e_j, f.e_c, f.e_l)?;
                let epsilons = match (&f.array, f.count, f.eps_ps) {
                    (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
                        return Err(CliError::config("array", "give either `array` or `N` with `eps_ps_GHz`, not both"))
                    }
                    (Some(array), None, None) => {
                        array.validate().map_err(|e| prefix_field(e, "array"))?;
                        Some(junction_epsilons(array)?)
                    }
                    (None, Some(n), Some(eps)) => {
                        if n == 0 {
                            return Err(CliError::config("N", "must be >= 1"));
                        }
                        if !(eps > 0.0 && eps.is_finite()) {
                            return Err(CliError::config("eps_ps_GHz", "must be finite and > 0"));
                        }
                        Some(vec![eps; n])
                    }
                    (None, Some(_), None) => return Err(CliError::config("eps_ps_GHz", "required with `N`")),
                    (None, None, Some(_)) => return Err(CliError::config("N", "required with `eps_ps_GHz`")),
                    (None, None, None) => None,
                };
                Ok(Self {
                    label: f.label.clone().unwrap_or_else(|| "custom".into()),
                    params,
                    epsilons,
                    a_phi: f.a_phi,
                })
            }
        }
    }

    pub fn require_epsilons(&self) -> Result<Vec<f64>> {
        self.epsilons
            .clone()
            .ok_or_else(|| CliError::config("array", "the qubit file needs `array`, or `N` with `eps_ps_GHz`"))
    }

    pub fn model(&self) -> Result<QubitModel<f64>> {
        let a_phi = self
            .a_phi
            .ok_or_else(|| CliError::config("A_phi_uPhi0_per_rtHz", "required for flux-noise dephasing"))?;
        let flux_noise = FluxNoiseModel::ramsey(a_phi);
        flux_noise.validate()?;
        Ok(QubitModel {
            label: self.label.clone(),
            params: self.params,
            epsilons: self.require_epsilons()?,
            flux_noise,
        })
    }
}

fn prefix_field(e: cqps_core::Error, prefix: &str) -> CliError {
    match e {
        cqps_core::Error::Validation { field, reason } => CliError::config(format!("{prefix}.{field}"), reason),
        other => other.into(),
    }
}

#[derive(Debug, Deserialize)]
struct EchoCsvRow {
    gamma_phi_e_per_s: f64,
    #[serde(rename = "dispersion_GHz_per_phi0")]
    dispersion: f64,
}

pub fn read_echo_rows(bytes: &[u8], path: &Path) -> Result<Vec<cqps_core::analysis::EchoRow<f64>>> {
    let mut rdr = csv::Reader::from_reader(bytes);
    rdr.deserialize::<EchoCsvRow>()
        .enumerate()
        .map(|(i, r)| {
            let r = r.map_err(|e| csv_error(path, i, e))?;
            Ok(cqps_core::analysis::EchoRow {
                gamma_phi_e_per_s: r.gamma_phi_e_per_s,
                dispersion: r.dispersion,
            })
        })
        .collect()
}

/// Two-column PSD table: frequency in `f_Hz`, density in the second column.
pub fn read_psd(bytes: &[u8], path: &Path) -> Result<SpectralDensity<f64>> {
    let mut rdr = csv::Reader::from_reader(bytes);
    let headers = rdr.headers().map_err(|e| csv_error(path, 0, e))?.clone();
    if headers.len() != 2 || &headers[0] != "f_Hz" {
        return Err(CliError::config(
            format!("{}:header", path.display()),
            format!("expected `f_Hz,<density>`, got `{}`", headers.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let (mut f, mut s) = (Vec::new(), Vec::new());
    for (i, rec) in rdr.deserialize::<(f64, f64)>().enumerate() {
        let (a, b) = rec.map_err(|e| csv_error(path, i, e))?;
        f.push(a);
        s.push(b);
    }
    Ok(SpectralDensity::model(f, s)?)
}

fn csv_error(path: &Path, row: usize, e: csv::Error) -> CliError {
    CliError::config(format!("{}:row {}", path.display(), row + 1), e.to_string())
}
