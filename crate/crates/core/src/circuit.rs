//! Circuit parameters: junction geometry, junction energies, arrays and the
//! fluxonium Hamiltonian triple.
//!
//! Energies are frequencies `E/h` in GHz. `E_C` is always the single-electron
//! charging energy `e^2 / 2C`, so the transmon/fluxonium kinetic term reads
//! `4 E_C n^2` with `n` in Cooper pairs.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, require_positive, Result};
use crate::Real;

/// CODATA 2018 exact values; every unit conversion goes through here.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    pub electron_charge: f64,
    pub planck: f64,
    pub flux_quantum: f64,
}

impl PhysicalConstants {
    pub const ELECTRON_CHARGE: f64 = 1.602_176_634e-19;
    pub const PLANCK: f64 = 6.626_070_15e-34;

    pub fn codata() -> Self {
        Self {
            electron_charge: Self::ELECTRON_CHARGE,
            planck: Self::PLANCK,
            flux_quantum: Self::PLANCK / (2.0 * Self::ELECTRON_CHARGE),
        }
    }

    /// `E_C[GHz] * C[fF]`, i.e. `e^2 / 2h` in GHz·fF (about 19.37).
    pub fn charging_constant(&self) -> f64 {
        self.electron_charge * self.electron_charge / (2.0 * self.planck) * 1e15 / 1e9
    }

    /// `E_J[GHz] / I_c[µA]`, i.e. `Φ0 / 2πh` in GHz/µA (about 496.7).
    pub fn josephson_constant(&self) -> f64 {
        self.flux_quantum / (2.0 * std::f64::consts::PI * self.planck) * 1e-6 / 1e9
    }

    pub fn charging_energy<T: Real>(&self, capacitance_ff: T) -> T {
        T::lit(self.charging_constant()) / capacitance_ff
    }

    pub fn capacitance_from_charging_energy<T: Real>(&self, e_c_ghz: T) -> T {
        T::lit(self.charging_constant()) / e_c_ghz
    }

    pub fn josephson_energy<T: Real>(&self, critical_current_ua: T) -> T {
        T::lit(self.josephson_constant()) * critical_current_ua
    }

    pub fn critical_current_from_josephson_energy<T: Real>(&self, e_j_ghz: T) -> T {
        e_j_ghz / T::lit(self.josephson_constant())
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::codata()
    }
}

/// Rectangular junction of area `length * width`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JunctionGeometry<T> {
    #[serde(rename = "length_um")]
    pub length: T,
    #[serde(rename = "width_um")]
    pub width: T,
    #[serde(rename = "c_s_fF_per_um2")]
    pub specific_capacitance: T,
    #[serde(rename = "J_c_uA_per_um2")]
    pub critical_current_density: T,
}

impl<T: Real> JunctionGeometry<T> {
    pub fn validate(&self) -> Result<()> {
        require_positive("length_um", self.length)?;
        require_positive("width_um", self.width)?;
        require_positive("c_s_fF_per_um2", self.specific_capacitance)?;
        require_positive("J_c_uA_per_um2", self.critical_current_density)
    }

    /// Area in µm².
    pub fn area(&self) -> T {
        self.length * self.width
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JunctionParams<T> {
    #[serde(rename = "E_J_GHz")]
    pub e_j: T,
    #[serde(rename = "E_C_GHz")]
    pub e_c: T,
    #[serde(rename = "C_fF")]
    pub capacitance: T,
    #[serde(rename = "I_c_uA")]
    pub critical_current: T,
}

impl<T: Real> JunctionParams<T> {
    /// Junction with the given energies; capacitance and critical current are
    /// filled in by unit conversion.
    pub fn from_energies(e_j: T, e_c: T) -> Result<Self> {
        require_positive("E_J_GHz", e_j)?;
        require_positive("E_C_GHz", e_c)?;
        let k = PhysicalConstants::codata();
        Ok(Self {
            e_j,
            e_c,
            capacitance: k.capacitance_from_charging_energy(e_c),
            critical_current: k.critical_current_from_josephson_energy(e_j),
        })
    }

    /// Junction with capacitance `capacitance_ff` and Josephson energy `e_j`.
    pub fn from_capacitance(capacitance_ff: T, e_j: T) -> Result<Self> {
        require_positive("C_fF", capacitance_ff)?;
        Self::from_energies(e_j, PhysicalConstants::codata().charging_energy(capacitance_ff))
    }

    pub fn validate(&self) -> Result<()> {
        require_positive("E_J_GHz", self.e_j)?;
        require_positive("E_C_GHz", self.e_c)
    }

    /// `E_J / E_C`.
    pub fn ratio(&self) -> T {
        self.e_j / self.e_c
    }
}

/// How the array junctions are described.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrayJunction<T> {
    Geometry(JunctionGeometry<T>),
    Explicit(JunctionParams<T>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArraySpec<T> {
    #[serde(rename = "N")]
    pub count: usize,
    pub junction: ArrayJunction<T>,
    /// Per-junction phase-slip amplitudes replacing the homogeneous value.
    #[serde(
        rename = "per_junction_epsilon_override_GHz",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub epsilon_override: Option<Vec<T>>,
}

impl<T: Real> ArraySpec<T> {
    pub fn homogeneous(count: usize, junction: ArrayJunction<T>) -> Result<Self> {
        let spec = Self {
            count,
            junction,
            epsilon_override: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(invalid("N", "array needs at least one junction"));
        }
        match &self.junction {
            ArrayJunction::Geometry(g) => g.validate()?,
            ArrayJunction::Explicit(j) => j.validate()?,
        }
        if let Some(eps) = &self.epsilon_override {
            if eps.len() != self.count {
                return Err(invalid(
                    "per_junction_epsilon_override_GHz",
                    format!("length {} differs from N = {}", eps.len(), self.count),
                ));
            }
            if eps.iter().any(|v| !(v.is_finite() && *v >= T::zero())) {
                return Err(invalid("per_junction_epsilon_override_GHz", "values must be finite and >= 0"));
            }
        }
        Ok(())
    }

    /// Parameters of a single array junction.
    pub fn junction_params(&self) -> Result<JunctionParams<T>> {
        match &self.junction {
            ArrayJunction::Geometry(g) => junction_from_geometry(g),
            ArrayJunction::Explicit(j) => {
                j.validate()?;
                Ok(*j)
            }
        }
    }
}

/// Fluxonium Hamiltonian parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real"))]
pub struct FluxoniumParams<T> {
    #[serde(rename = "E_J_GHz")]
    pub e_j: T,
    #[serde(rename = "E_C_GHz")]
    pub e_c: T,
    #[serde(rename = "E_L_GHz")]
    pub e_l: T,
    /// External flux in units of Φ0.
    #[serde(rename = "phi_ext")]
    pub flux: T,
    /// Offset charge of the small-junction island in Cooper pairs.
    #[serde(rename = "n_g", default = "num_traits::Zero::zero")]
    pub offset_charge: T,
}

impl<T: Real> FluxoniumParams<T> {
    pub fn new(e_j: T, e_c: T, e_l: T) -> Result<Self> {
        let p = Self {
            e_j,
            e_c,
            e_l,
            flux: T::zero(),
            offset_charge: T::zero(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn at_flux(mut self, flux: T) -> Self {
        self.flux = flux;
        self
    }

    pub fn with_offset_charge(mut self, n_g: T) -> Self {
        self.offset_charge = n_g;
        self
    }

    pub fn validate(&self) -> Result<()> {
        require_positive("E_J_GHz", self.e_j)?;
        require_positive("E_C_GHz", self.e_c)?;
        require_positive("E_L_GHz", self.e_l)?;
        if !self.flux.is_finite() {
            return Err(invalid("phi_ext", "must be finite"));
        }
        if !(self.offset_charge >= T::zero() && self.offset_charge < T::one()) {
            return Err(invalid("n_g", format!("must lie in [0, 1), got {}", self.offset_charge)));
        }
        Ok(())
    }

    /// Oscillator frequency `sqrt(8 E_C E_L)` of the inductive mode.
    pub fn oscillator_frequency(&self) -> T {
        (T::lit(8.0) * self.e_c * self.e_l).sqrt()
    }

    /// Zero-point phase fluctuation `(2 E_C / E_L)^{1/4}`.
    pub fn phase_zpf(&self) -> T {
        (T::lit(2.0) * self.e_c / self.e_l).sqrt().sqrt()
    }
}

pub fn junction_from_geometry<T: Real>(g: &JunctionGeometry<T>) -> Result<JunctionParams<T>> {
    g.validate()?;
    let k = PhysicalConstants::codata();
    let area = g.area();
    let capacitance = g.specific_capacitance * area;
    let critical_current = g.critical_current_density * area;
    Ok(JunctionParams {
        e_j: k.josephson_energy(critical_current),
        e_c: k.charging_energy(capacitance),
        capacitance,
        critical_current,
    })
}

/// `z = Z / R_Q = (1/2π) sqrt(8 E_C / E_J)`.
pub fn reduced_impedance<T: Real>(j: &JunctionParams<T>) -> T {
    (T::lit(8.0) * j.e_c / j.e_j).sqrt() / T::TAU()
}

/// `sqrt(8 E_J E_C)` in GHz.
pub fn plasma_frequency<T: Real>(j: &JunctionParams<T>) -> T {
    (T::lit(8.0) * j.e_j * j.e_c).sqrt()
}

/// `E_L = E_JA / N`.
pub fn array_inductive_energy<T: Real>(a: &ArraySpec<T>) -> Result<T> {
    a.validate()?;
    Ok(a.junction_params()?.e_j / T::from_usize_lossy(a.count))
}
