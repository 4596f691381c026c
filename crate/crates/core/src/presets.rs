//! Measured device table (`data/table1.json`) and helpers turning a row into
//! model inputs.

use serde::{Deserialize, Serialize};

use crate::circuit::{ArrayJunction, ArraySpec, FluxoniumParams, JunctionGeometry, JunctionParams};
use crate::cqps::junction_epsilons;
use crate::dephasing::{FluxNoiseModel, QubitModel};
use crate::error::{invalid, Result};
use crate::Real;

const TABLE1_JSON: &str = include_str!("../../../data/table1.json");

/// Fabrication constants shared by all devices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Process<T> {
    #[serde(rename = "c_s_fF_per_um2")]
    pub specific_capacitance: T,
    #[serde(rename = "J_c_uA_per_um2")]
    pub critical_current_density: T,
    #[serde(rename = "array_junction_width_um")]
    pub junction_width: T,
}

/// One device row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QubitSpec<T> {
    pub label: String,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "length_um")]
    pub length: T,
    #[serde(rename = "E_J_GHz")]
    pub e_j: T,
    #[serde(rename = "E_C_GHz")]
    pub e_c: T,
    #[serde(rename = "E_L_GHz")]
    pub e_l: T,
    #[serde(rename = "f01_GHz")]
    pub f01: T,
    #[serde(rename = "T1_us")]
    pub t1_us: T,
    #[serde(rename = "T_phiR_us")]
    pub t_phi_r_us: T,
    #[serde(rename = "T_phiE_us")]
    pub t_phi_e_us: T,
    /// Reported reduced impedance of an array junction.
    #[serde(rename = "z_A")]
    pub z_a: T,
    #[serde(rename = "A_phi_uPhi0_per_rtHz")]
    pub a_phi: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1<T> {
    pub process: Process<T>,
    pub qubits: Vec<QubitSpec<T>>,
}

pub fn table1<T: Real>() -> Table1<T> {
    serde_json::from_str(TABLE1_JSON).expect("bundled table parses")
}

pub fn preset_names() -> Vec<String> {
    table1::<f64>().qubits.into_iter().map(|q| q.label).collect()
}

/// Row `name` (`Q1`..`Q6`, case-insensitive).
pub fn load_qubit_preset<T: Real>(name: &str) -> Result<QubitSpec<T>> {
    table1::<T>()
        .qubits
        .into_iter()
        .find(|q| q.label.eq_ignore_ascii_case(name.trim()))
        .ok_or_else(|| {
            invalid(
                "preset",
                format!("unknown preset `{name}`; expected one of {}", preset_names().join(", ")),
            )
        })
}

impl<T: Real> QubitSpec<T> {
    pub fn params(&self) -> FluxoniumParams<T> {
        FluxoniumParams::new(self.e_j, self.e_c, self.e_l).expect("table energies are positive")
    }

    pub fn junction_geometry(&self, process: &Process<T>) -> JunctionGeometry<T> {
        JunctionGeometry {
            length: self.length,
            width: process.junction_width,
            specific_capacitance: process.specific_capacitance,
            critical_current_density: process.critical_current_density,
        }
    }

    /// Array junctions with `E_JA = N E_L` (the fitted inductance) and the
    /// capacitance of the drawn junction area.
    pub fn array_from_inductance(&self, process: &Process<T>) -> Result<ArraySpec<T>> {
        let g = self.junction_geometry(process);
        let c = g.specific_capacitance * g.area();
        let e_ja = self.e_l * T::from_usize_lossy(self.n);
        ArraySpec::homogeneous(self.n, ArrayJunction::Explicit(JunctionParams::from_capacitance(c, e_ja)?))
    }

    /// Array junctions entirely from geometry and the process `J_c`.
    pub fn array_from_geometry(&self, process: &Process<T>) -> Result<ArraySpec<T>> {
        ArraySpec::homogeneous(self.n, ArrayJunction::Geometry(self.junction_geometry(process)))
    }

    /// Dephasing model with Ramsey flux noise at the row's `A_Φ`.
    pub fn qubit_model(&self, array: &ArraySpec<T>) -> Result<QubitModel<T>> {
        Ok(QubitModel {
            label: self.label.clone(),
            params: self.params(),
            epsilons: junction_epsilons(array)?,
            flux_noise: FluxNoiseModel::ramsey(self.a_phi),
        })
    }

    /// `E_JA / N` for the geometry path, for comparison with the table `E_L`.
    pub fn geometric_inductive_energy(&self, process: &Process<T>) -> Result<T> {
        let a = self.array_from_geometry(process)?;
        Ok(a.junction_params()?.e_j / T::from_usize_lossy(self.n))
    }
}
