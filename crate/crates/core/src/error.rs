use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid {field}: {reason}")]
    Validation { field: String, reason: String },

    #[error("eigensolver did not converge after {iterations} QL iterations")]
    NoConvergence { iterations: usize },

    #[error(
        "basis of dimension {dimension} not converged: levels shift by up to {shift:e} GHz when doubled"
    )]
    BasisNotConverged {
        dimension: usize,
        shift: f64,
        coarse: Vec<f64>,
        fine: Vec<f64>,
    },

    #[error("objective is not finite at {point:?}")]
    NonFiniteObjective { point: Vec<f64> },

    #[error("parameters not identifiable: {0}")]
    Identifiability(String),

    #[error("wavefunction amplitude {amplitude:e} at the grid edge ±{half_width}π; use a wider grid")]
    BoundaryLeakage { amplitude: f64, half_width: f64 },

    #[error("phase grid too coarse: overlap moves by {change:e} on refinement")]
    GridTooCoarse { change: f64 },

    #[error("charge basis too small: top charge state carries weight {weight:e}")]
    ChargeBasisTooSmall { weight: f64 },

    #[error("run needs {requested} samples but the cap is {cap}")]
    MemoryGuard { requested: usize, cap: usize },

    #[error("cannot parse {what}: {message}")]
    Parse { what: String, message: String },

    #[error("sweep cell (x={x}, y={y}): {source}")]
    Cell {
        x: f64,
        y: f64,
        #[source]
        source: Box<Error>,
    },
}

pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::Validation {
        field: field.into(),
        reason: reason.into(),
    }
}

/// Returns a validation error unless `value` is finite and strictly positive.
pub(crate) fn require_positive<T: crate::Real>(field: &str, value: T) -> Result<()> {
    if value.is_finite() && value > T::zero() {
        Ok(())
    } else {
        Err(invalid(field, format!("must be finite and > 0, got {value}")))
    }
}
