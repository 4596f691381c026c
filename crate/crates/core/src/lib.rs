pub mod analysis;
pub mod circuit;
pub mod cqps;
pub mod dephasing;
pub mod design;
pub mod error;
pub mod numerics;
pub mod paritysim;
pub mod phaseslip;
pub mod presets;
mod scalar;
pub mod spectrum;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Fluxonium = circuit::FluxoniumParams<f64>;
pub type Junction = circuit::JunctionParams<f64>;
pub type Geometry = circuit::JunctionGeometry<f64>;
pub type Array = circuit::ArraySpec<f64>;
pub type Eigen = spectrum::EigenSolution<f64>;
pub type StructureFactor = cqps::StructureFactor<f64>;
pub type ChargeConfiguration = cqps::ChargeConfiguration<f64>;
pub type Qubit = dephasing::QubitModel<f64>;
pub type ParityConfig = paritysim::SimConfig<f64>;
pub type ParityTrace = paritysim::TraceResult<f64>;
pub type Psd = numerics::SpectralDensity<f64>;
pub type Sweep = design::SweepSpec<f64>;
pub type SweepOutput = design::SweepResult<f64>;
pub type Preset = presets::QubitSpec<f64>;
