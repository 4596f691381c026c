//! Design-space maps: structure factor over Hamiltonian ratios and the CQPS
//! Ramsey limit over array fabrication parameters.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{reduced_impedance, FluxoniumParams, JunctionParams, PhysicalConstants};
use crate::cqps::{cqps_dephasing_rate, structure_factor_with};
use crate::error::{invalid, require_positive, Error, Result};
use crate::phaseslip::wkb_phase_slip_energy;
use crate::spectrum::{BasisConfig, GridSpec};
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AxisName {
    #[serde(rename = "E_L_over_E_C")]
    ElOverEc,
    #[serde(rename = "E_J_over_E_C")]
    EjOverEc,
    #[serde(rename = "E_L_GHz")]
    InductiveEnergy,
    #[serde(rename = "a_A_um2")]
    Area,
    #[serde(rename = "J_c_uA_per_um2")]
    CriticalCurrentDensity,
    #[serde(rename = "N")]
    JunctionCount,
}

impl std::fmt::Display for AxisName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            AxisName::ElOverEc => "E_L_over_E_C",
            AxisName::EjOverEc => "E_J_over_E_C",
            AxisName::InductiveEnergy => "E_L_GHz",
            AxisName::Area => "a_A_um2",
            AxisName::CriticalCurrentDensity => "J_c_uA_per_um2",
            AxisName::JunctionCount => "N",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AxisScale {
    Linear,
    #[default]
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis<T> {
    pub name: AxisName,
    pub min: T,
    pub max: T,
    pub points: usize,
    #[serde(default)]
    pub scale: AxisScale,
}

impl<T: Real> Axis<T> {
    pub fn new(name: AxisName, min: T, max: T, points: usize, scale: AxisScale) -> Self {
        Self { name, min, max, points, scale }
    }

    pub fn log(name: AxisName, min: T, max: T, points: usize) -> Self {
        Self::new(name, min, max, points, AxisScale::Log)
    }

    pub fn linear(name: AxisName, min: T, max: T, points: usize) -> Self {
        Self::new(name, min, max, points, AxisScale::Linear)
    }

    /// A single-point axis at `value`.
    pub fn point(name: AxisName, value: T) -> Self {
        Self::new(name, value, value, 1, AxisScale::Linear)
    }

    pub fn validate(&self) -> Result<()> {
        let field = format!("axis {}", self.name);
        require_positive(&field, self.min)?;
        require_positive(&field, self.max)?;
        if self.points == 0 {
            return Err(invalid(field, "needs at least one point"));
        }
        if self.points == 1 && self.min != self.max {
            return Err(invalid(field, "a single point needs min == max"));
        }
        if self.points > 1 && self.max <= self.min {
            return Err(invalid(field, format!("max {} must exceed min {}", self.max, self.min)));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<T> {
        if self.points == 1 {
            return vec![self.min];
        }
        let last = T::from_usize_lossy(self.points - 1);
        (0..self.points)
            .map(|i| {
                let s = T::from_usize_lossy(i) / last;
                if i == 0 {
                    return self.min;
                }
                if i == self.points - 1 {
                    return self.max;
                }
                match self.scale {
                    AxisScale::Linear => self.min + (self.max - self.min) * s,
                    AxisScale::Log => (self.min.ln() + (self.max.ln() - self.min.ln()) * s).exp(),
                }
            })
            .collect()
    }
}

/// Values not set by a swept axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real"), default)]
pub struct FixedParams<T> {
    #[serde(rename = "E_J_GHz")]
    pub e_j: T,
    #[serde(rename = "E_C_GHz")]
    pub e_c: T,
    #[serde(rename = "E_L_GHz")]
    pub e_l: T,
    #[serde(rename = "a_A_um2")]
    pub area: T,
    #[serde(rename = "J_c_uA_per_um2")]
    pub critical_current_density: T,
    #[serde(rename = "c_s_fF_per_um2")]
    pub specific_capacitance: T,
    #[serde(rename = "N")]
    pub junction_count: T,
}

impl<T: Real> Default for FixedParams<T> {
    fn default() -> Self {
        Self {
            e_j: T::lit(3.2),
            e_c: T::lit(1.4),
            e_l: T::lit(0.25),
            area: T::lit(0.37),
            critical_current_density: T::lit(0.15),
            specific_capacitance: T::lit(49.0),
            junction_count: T::lit(85.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    /// `|F_01|` at the chosen flux over `(E_L/E_C, E_J/E_C)`.
    StructureFactor,
    /// `T_φR` limited by CQPS.
    CqpsLimit,
}

/// How the array closes once two of its parameters are swept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivedRule {
    /// Junction area and `J_c` fix `E_JA`; `N = round(E_JA / E_L)`.
    HoldInductance,
    /// `N` and the target `E_L` fix `E_JA`; the area follows from `J_c`.
    AreaFromCount,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real"))]
pub struct SweepSpec<T> {
    pub kind: SweepKind,
    #[serde(default)]
    pub fixed: FixedParams<T>,
    pub x: Axis<T>,
    pub y: Axis<T>,
    #[serde(default)]
    pub rule: Option<DerivedRule>,
    #[serde(default = "half_flux")]
    pub phi_ext: T,
}

fn half_flux<T: Real>() -> T {
    T::lit(0.5)
}

impl<T: Real> SweepSpec<T> {
    /// `|F_01|` over `E_L/E_C ∈ [0.1, 10]`, `E_J/E_C ∈ [0.5, 10]`.
    pub fn structure_factor_map(points: usize) -> Self {
        Self {
            kind: SweepKind::StructureFactor,
            fixed: FixedParams::default(),
            x: Axis::log(AxisName::ElOverEc, T::lit(0.1), T::lit(10.0), points),
            y: Axis::log(AxisName::EjOverEc, T::lit(0.5), T::lit(10.0), points),
            rule: None,
            phi_ext: half_flux(),
        }
    }

    /// Limit over junction area (x) and target `E_L` (y) at fixed `J_c`.
    pub fn inductance_area(points: usize) -> Self {
        Self {
            kind: SweepKind::CqpsLimit,
            fixed: FixedParams::default(),
            x: Axis::log(AxisName::Area, T::lit(0.1), T::lit(2.0), points),
            y: Axis::log(AxisName::InductiveEnergy, T::lit(0.1), T::one(), points),
            rule: Some(DerivedRule::HoldInductance),
            phi_ext: half_flux(),
        }
    }

    /// Limit over `N` (x) and `J_c` (y) at fixed target `E_L`.
    pub fn count_current_density(points: usize) -> Self {
        Self {
            kind: SweepKind::CqpsLimit,
            fixed: FixedParams::default(),
            x: Axis::log(AxisName::JunctionCount, T::lit(50.0), T::lit(500.0), points),
            y: Axis::log(AxisName::CriticalCurrentDensity, T::lit(0.1), T::lit(0.3), points),
            rule: Some(DerivedRule::AreaFromCount),
            phi_ext: half_flux(),
        }
    }

    /// Limit over area (x) and `J_c` (y) at fixed target `E_L`.
    pub fn area_current_density(points: usize) -> Self {
        Self {
            kind: SweepKind::CqpsLimit,
            fixed: FixedParams::default(),
            x: Axis::log(AxisName::Area, T::lit(0.1), T::lit(2.0), points),
            y: Axis::log(AxisName::CriticalCurrentDensity, T::lit(0.05), T::one(), points),
            rule: Some(DerivedRule::HoldInductance),
            phi_ext: half_flux(),
        }
    }

    /// Named presets `fig6a` .. `fig6d` at `points` per axis.
    pub fn preset(name: &str, points: usize) -> Result<Self> {
        match name {
            "fig6a" => Ok(Self::structure_factor_map(points)),
            "fig6b" => Ok(Self::inductance_area(points)),
            "fig6c" => Ok(Self::count_current_density(points)),
            "fig6d" => Ok(Self::area_current_density(points)),
            _ => Err(invalid("preset", format!("unknown sweep `{name}`; expected fig6a, fig6b, fig6c or fig6d"))),
        }
    }

    pub fn resolved_rule(&self) -> DerivedRule {
        self.rule.unwrap_or(if self.has_axis(AxisName::JunctionCount) {
            DerivedRule::AreaFromCount
        } else {
            DerivedRule::HoldInductance
        })
    }

    fn has_axis(&self, name: AxisName) -> bool {
        self.x.name == name || self.y.name == name
    }

    pub fn validate(&self) -> Result<()> {
        self.x.validate()?;
        self.y.validate()?;
        if self.x.name == self.y.name {
            return Err(invalid("axes", format!("both axes sweep {}", self.x.name)));
        }
        if !self.phi_ext.is_finite() {
            return Err(invalid("phi_ext", "must be finite"));
        }
        let f = &self.fixed;
        for (name, v) in [
            ("fixed.E_J_GHz", f.e_j),
            ("fixed.E_C_GHz", f.e_c),
            ("fixed.E_L_GHz", f.e_l),
            ("fixed.a_A_um2", f.area),
            ("fixed.J_c_uA_per_um2", f.critical_current_density),
            ("fixed.c_s_fF_per_um2", f.specific_capacitance),
            ("fixed.N", f.junction_count),
        ] {
            require_positive(name, v)?;
        }
        match self.kind {
            SweepKind::StructureFactor => {
                for a in [&self.x, &self.y] {
                    if !matches!(a.name, AxisName::ElOverEc | AxisName::EjOverEc) {
                        return Err(invalid(
                            format!("axis {}", a.name),
                            "structure-factor maps sweep E_L_over_E_C and E_J_over_E_C",
                        ));
                    }
                }
            }
            SweepKind::CqpsLimit => {
                for a in [&self.x, &self.y] {
                    if matches!(a.name, AxisName::ElOverEc | AxisName::EjOverEc) {
                        return Err(invalid(format!("axis {}", a.name), "not an array parameter"));
                    }
                }
                let (conflict, why) = match self.resolved_rule() {
                    DerivedRule::HoldInductance => (AxisName::JunctionCount, "N is derived from E_L"),
                    DerivedRule::AreaFromCount => (AxisName::Area, "the area is derived from N"),
                };
                if self.has_axis(conflict) {
                    return Err(invalid("rule", format!("cannot sweep {conflict}: {why}")));
                }
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text).map_err(|e| Error::Parse {
            what: "sweep spec".into(),
            message: e.to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Basis and grid for one attempt at a cell's eigenproblem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    pub basis: BasisConfig,
    pub grid: GridSpec,
}

/// Resolutions tried in order; a cell moves to the next one only when the
/// basis fails to converge or the wavefunction reaches the grid edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub ladder: Vec<Resolution>,
}

impl Default for SweepOptions {
    fn default() -> Self {
        let basis = |dimension| BasisConfig {
            dimension,
            ..BasisConfig::default()
        };
        let wide = GridSpec {
            half_width_pi: 16,
            intervals: 8192,
        };
        Self {
            ladder: [80, 150, 300]
                .into_iter()
                .map(|d| Resolution {
                    basis: basis(d),
                    grid: wide,
                })
                .collect(),
        }
    }
}

impl SweepOptions {
    pub fn single(basis: BasisConfig, grid: GridSpec) -> Self {
        Self {
            ladder: vec![Resolution { basis, grid }],
        }
    }
}

/// Array realised in one cell of a limit sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayDesign<T> {
    pub count: usize,
    pub area: T,
    pub junction: JunctionParams<T>,
    pub achieved_e_l: T,
}

impl<T: Real> ArrayDesign<T> {
    /// `None` when rounding leaves no junctions.
    pub fn hold_inductance(e_l: T, area: T, j_c: T, c_s: T) -> Result<Option<Self>> {
        let k = PhysicalConstants::codata();
        let e_ja = k.josephson_energy(j_c * area);
        let junction = JunctionParams::from_capacitance(c_s * area, e_ja)?;
        let n = (e_ja / e_l).round();
        if n < T::one() {
            return Ok(None);
        }
        let count = n.as_f64() as usize;
        Ok(Some(Self {
            count,
            area,
            junction,
            achieved_e_l: e_ja / n,
        }))
    }

    pub fn from_count(count: usize, e_l: T, j_c: T, c_s: T) -> Result<Option<Self>> {
        if count == 0 {
            return Ok(None);
        }
        let k = PhysicalConstants::codata();
        let e_ja = e_l * T::from_usize_lossy(count);
        let area = k.critical_current_from_josephson_energy(e_ja) / j_c;
        let junction = JunctionParams::from_capacitance(c_s * area, e_ja)?;
        Ok(Some(Self {
            count,
            area,
            junction,
            achieved_e_l: e_l,
        }))
    }

    pub fn reduced_impedance(&self) -> T {
        reduced_impedance(&self.junction)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepCell<T> {
    pub x: T,
    pub y: T,
    /// `|F_01|` or `T_φR` in seconds; `None` for invalid cells.
    pub value: Option<T>,
    #[serde(rename = "achieved_EL_GHz")]
    pub achieved_e_l: Option<T>,
    #[serde(rename = "N")]
    pub n: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real"))]
pub struct SweepResult<T> {
    pub spec: SweepSpec<T>,
    pub x: Vec<T>,
    pub y: Vec<T>,
    /// Row-major: `cells[iy * x.len() + ix]`.
    pub cells: Vec<SweepCell<T>>,
}

impl<T: Real> SweepResult<T> {
    pub fn cell(&self, ix: usize, iy: usize) -> &SweepCell<T> {
        &self.cells[iy * self.x.len() + ix]
    }

    pub fn value(&self, ix: usize, iy: usize) -> Option<T> {
        self.cell(ix, iy).value
    }

    /// Long format, header `x,y,value,achieved_EL_GHz,N`.
    pub fn write_long_csv<W: Write>(&self, w: W) -> Result<()> {
        crate::analysis::write_rows(w, &self.cells)
    }

    pub fn read_long_csv<R: Read>(r: R) -> Result<Vec<SweepCell<T>>> {
        crate::analysis::read_rows(r, "sweep csv")
    }

    /// Matrix layout: header `y\x` then the x values, one row per y value,
    /// invalid cells left empty. Numbers use shortest round-trip exponent form.
    pub fn write_grid_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Parse {
            what: "grid csv".into(),
            message: e.to_string(),
        };
        let mut header = vec![format!("{}\\{}", self.spec.y.name, self.spec.x.name)];
        let num = |v: T| format!("{:e}", v.as_f64());
        header.extend(self.x.iter().map(|&v| num(v)));
        out.write_record(&header).map_err(io)?;
        for (iy, y) in self.y.iter().enumerate() {
            let mut row = vec![num(*y)];
            row.extend((0..self.x.len()).map(|ix| self.value(ix, iy).map(num).unwrap_or_default()));
            out.write_record(&row).map_err(io)?;
        }
        out.flush().map_err(|e| Error::Parse {
            what: "grid csv".into(),
            message: e.to_string(),
        })
    }
}

fn cell_error(x: f64, y: f64) -> impl Fn(Error) -> Error {
    move |e| Error::Cell {
        x,
        y,
        source: Box::new(e),
    }
}

fn f01_magnitude<T: Real>(p: FluxoniumParams<T>, phi: T, opts: &SweepOptions) -> Result<T> {
    let p = p.at_flux(phi);
    let mut last = invalid("ladder", "no resolutions given");
    for r in &opts.ladder {
        match structure_factor_with(&p, &r.basis, &r.grid, 0, 1) {
            Ok(f) => return Ok(f.magnitude()),
            Err(e @ (Error::BasisNotConverged { .. } | Error::BoundaryLeakage { .. })) => last = e,
            Err(e) => return Err(e),
        }
    }
    Err(last)
}

/// `|F_01|` over `(E_L/E_C, E_J/E_C)` with `E_C` from the fixed set.
pub fn sweep_structure_factor<T: Real>(spec: &SweepSpec<T>, opts: &SweepOptions) -> Result<SweepResult<T>> {
    spec.validate()?;
    if spec.kind != SweepKind::StructureFactor {
        return Err(invalid("kind", "expected a structure_factor sweep"));
    }
    let (xs, ys) = (spec.x.values(), spec.y.values());
    let e_c = spec.fixed.e_c;
    let cells = grid_points(&xs, &ys)
        .into_par_iter()
        .map(|(x, y)| {
            let ratio = |name| if spec.x.name == name { x } else { y };
            let e_l = ratio(AxisName::ElOverEc) * e_c;
            let err = cell_error(x.as_f64(), y.as_f64());
            let p = FluxoniumParams::new(ratio(AxisName::EjOverEc) * e_c, e_c, e_l).map_err(&err)?;
            let f = f01_magnitude(p, spec.phi_ext, opts).map_err(&err)?;
            Ok(SweepCell {
                x,
                y,
                value: Some(f),
                achieved_e_l: Some(e_l),
                n: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        spec: spec.clone(),
        x: xs,
        y: ys,
        cells,
    })
}

fn grid_points<T: Real>(xs: &[T], ys: &[T]) -> Vec<(T, T)> {
    ys.iter().flat_map(|&y| xs.iter().map(move |&x| (x, y))).collect()
}

/// Array realised at one `(x, y)` point of a limit sweep.
pub fn cell_design<T: Real>(spec: &SweepSpec<T>, x: T, y: T) -> Result<Option<ArrayDesign<T>>> {
    let pick = |name: AxisName, fixed: T| {
        if spec.x.name == name {
            x
        } else if spec.y.name == name {
            y
        } else {
            fixed
        }
    };
    let f = &spec.fixed;
    let e_l = pick(AxisName::InductiveEnergy, f.e_l);
    let j_c = pick(AxisName::CriticalCurrentDensity, f.critical_current_density);
    match spec.resolved_rule() {
        DerivedRule::HoldInductance => {
            ArrayDesign::hold_inductance(e_l, pick(AxisName::Area, f.area), j_c, f.specific_capacitance)
        }
        DerivedRule::AreaFromCount => {
            let n = pick(AxisName::JunctionCount, f.junction_count).round();
            if n < T::one() {
                return Ok(None);
            }
            ArrayDesign::from_count(n.as_f64() as usize, e_l, j_c, f.specific_capacitance)
        }
    }
}

/// CQPS Ramsey limit `T = 1/Γ` (s) per cell. `|F_01|` is evaluated once per
/// distinct achieved `E_L`.
pub fn sweep_cqps_limit<T: Real>(spec: &SweepSpec<T>, opts: &SweepOptions) -> Result<SweepResult<T>> {
    spec.validate()?;
    if spec.kind != SweepKind::CqpsLimit {
        return Err(invalid("kind", "expected a cqps_limit sweep"));
    }
    let (xs, ys) = (spec.x.values(), spec.y.values());
    let points = grid_points(&xs, &ys);
    let designs = points
        .iter()
        .map(|&(x, y)| cell_design(spec, x, y).map_err(cell_error(x.as_f64(), y.as_f64())))
        .collect::<Result<Vec<_>>>()?;

    let mut first_use: BTreeMap<u64, (T, (T, T))> = BTreeMap::new();
    for (d, &pt) in designs.iter().zip(&points) {
        if let Some(d) = d {
            first_use.entry(d.achieved_e_l.as_f64().to_bits()).or_insert((d.achieved_e_l, pt));
        }
    }
    let fixed = spec.fixed;
    let factors: BTreeMap<u64, T> = first_use
        .into_par_iter()
        .map(|(key, (e_l, (x, y)))| {
            let err = cell_error(x.as_f64(), y.as_f64());
            let p = FluxoniumParams::new(fixed.e_j, fixed.e_c, e_l).map_err(&err)?;
            Ok((key, f01_magnitude(p, spec.phi_ext, opts).map_err(&err)?))
        })
        .collect::<Result<_>>()?;

    let cells = designs
        .into_par_iter()
        .zip(points)
        .map(|(d, (x, y))| {
            let Some(d) = d else {
                return Ok(SweepCell {
                    x,
                    y,
                    value: None,
                    achieved_e_l: None,
                    n: None,
                });
            };
            let eps = wkb_phase_slip_energy(&d.junction)
                .map_err(cell_error(x.as_f64(), y.as_f64()))?
                .amplitude
                .value;
            let f = crate::cqps::StructureFactor::real(
                factors[&d.achieved_e_l.as_f64().to_bits()],
                (0, 1),
                spec.phi_ext,
            );
            Ok(SweepCell {
                x,
                y,
                value: Some(cqps_dephasing_rate(d.count, eps, &f).recip()),
                achieved_e_l: Some(d.achieved_e_l),
                n: Some(d.count),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        spec: spec.clone(),
        x: xs,
        y: ys,
        cells,
    })
}

pub fn run_sweep<T: Real>(spec: &SweepSpec<T>, opts: &SweepOptions) -> Result<SweepResult<T>> {
    match spec.kind {
        SweepKind::StructureFactor => sweep_structure_factor(spec, opts),
        SweepKind::CqpsLimit => sweep_cqps_limit(spec, opts),
    }
}

/// Junction impedance and WKB amplitude against area at fixed `J_c`, `c_s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpedanceRow<T> {
    #[serde(rename = "a_A_um2")]
    pub area: T,
    pub z_a: T,
    #[serde(rename = "eps_ps_GHz")]
    pub eps: T,
}

pub fn impedance_vs_area<T: Real>(areas: &[T], j_c: T, c_s: T) -> Result<Vec<ImpedanceRow<T>>> {
    let k = PhysicalConstants::codata();
    areas
        .iter()
        .map(|&a| {
            require_positive("a_A_um2", a)?;
            let j = JunctionParams::from_capacitance(c_s * a, k.josephson_energy(j_c * a))?;
            Ok(ImpedanceRow {
                area: a,
                z_a: reduced_impedance(&j),
                eps: wkb_phase_slip_energy(&j)?.amplitude.value,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cqps::structure_factor;

    #[test]
    fn axis_values() {
        let a = Axis::log(AxisName::Area, 0.1f64, 10.0, 3);
        let v = a.values();
        assert!((v[1] - 1.0).abs() < 1e-12 && (v[2] - 10.0).abs() < 1e-12);
        assert_eq!(Axis::linear(AxisName::Area, 1.0, 2.0, 3).values(), vec![1.0, 1.5, 2.0]);
        assert!(Axis::linear(AxisName::Area, 1.0, 2.0, 1).validate().is_err());
        assert!(Axis::log(AxisName::Area, -1.0, 2.0, 4).validate().is_err());
    }

    #[test]
    fn spec_validation() {
        let mut s = SweepSpec::<f64>::inductance_area(5);
        s.validate().unwrap();
        s.y.name = AxisName::JunctionCount;
        assert!(s.validate().is_err());
        s.rule = Some(DerivedRule::AreaFromCount);
        assert!(s.validate().is_err(), "area swept with the area-from-count rule");
        let mut s = SweepSpec::<f64>::structure_factor_map(5);
        s.y.name = AxisName::ElOverEc;
        assert!(s.validate().is_err());
        assert!(SweepSpec::<f64>::preset("fig6e", 5).is_err());
    }

    #[test]
    fn spec_json_defaults() {
        let s = SweepSpec::<f64>::from_json(
            r#"{"kind":"cqps_limit","x":{"name":"N","min":50,"max":500,"points":4},
                "y":{"name":"J_c_uA_per_um2","min":0.1,"max":0.3,"points":3,"scale":"linear"}}"#,
        )
        .unwrap();
        assert_eq!(s.resolved_rule(), DerivedRule::AreaFromCount);
        assert_eq!(s.fixed.e_j, 3.2);
        assert_eq!(s.phi_ext, 0.5);
        let e = SweepSpec::<f64>::from_json(r#"{"kind":"cqps_limit"}"#).unwrap_err();
        assert!(matches!(e, Error::Parse { .. }));
    }

    #[test]
    fn single_cell_matches_direct_call() {
        let mut s = SweepSpec::<f64>::structure_factor_map(1);
        s.x = Axis::point(AxisName::ElOverEc, 0.25 / 1.4);
        s.y = Axis::point(AxisName::EjOverEc, 3.2 / 1.4);
        let r = sweep_structure_factor(&s, &SweepOptions::default()).unwrap();
        let p = FluxoniumParams::new(3.2, 1.4, 0.25).unwrap().at_flux(0.5);
        let direct = structure_factor(&p, 0, 1).unwrap().magnitude();
        assert!((r.value(0, 0).unwrap() - direct).abs() < 1e-9);
    }

    #[test]
    fn hold_inductance_rounds_count() {
        let d = ArrayDesign::hold_inductance(0.25f64, 0.37, 0.15, 49.0).unwrap().unwrap();
        let e_ja = d.junction.e_j;
        assert_eq!(d.count as f64, (e_ja / 0.25).round());
        assert!((d.achieved_e_l - 0.25).abs() < 0.25 / d.count as f64);
        assert!(ArrayDesign::hold_inductance(1e3, 0.01, 0.15, 49.0).unwrap().is_none());
    }

    #[test]
    fn from_count_closes_inductance() {
        let d = ArrayDesign::from_count(85, 0.25f64, 0.15, 49.0).unwrap().unwrap();
        assert!((d.junction.e_j / 85.0 - 0.25).abs() < 1e-12);
        let back = ArrayDesign::hold_inductance(0.25, d.area, 0.15, 49.0).unwrap().unwrap();
        assert_eq!(back.count, 85);
    }

    #[test]
    fn invalid_cells_are_marked() {
        let mut s = SweepSpec::<f64>::inductance_area(3);
        s.x = Axis::point(AxisName::Area, 0.01);
        s.y = Axis::point(AxisName::InductiveEnergy, 50.0);
        let r = sweep_cqps_limit(&s, &SweepOptions::default()).unwrap();
        assert_eq!(r.cells[0].value, None);
        assert_eq!(r.cells[0].n, None);
    }

    #[test]
    fn impedance_falls_with_area() {
        let rows = impedance_vs_area(&[0.2, 0.4, 0.8], 0.15, 49.0).unwrap();
        assert!(rows.windows(2).all(|w| w[1].z_a < w[0].z_a && w[1].eps < w[0].eps));
    }

    #[test]
    fn long_and_grid_csv() {
        let s = SweepSpec::<f64>::area_current_density(3);
        let r = sweep_cqps_limit(&s, &SweepOptions::default()).unwrap();
        let mut buf = Vec::new();
        r.write_long_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x,y,value,achieved_EL_GHz,N\n"), "{text}");
        assert_eq!(SweepResult::<f64>::read_long_csv(&buf[..]).unwrap(), r.cells);
        let mut grid = Vec::new();
        r.write_grid_csv(&mut grid).unwrap();
        let grid = String::from_utf8(grid).unwrap();
        assert_eq!(grid.lines().count(), 4);
        assert!(grid.starts_with("J_c_uA_per_um2\\a_A_um2,"));
    }
}
