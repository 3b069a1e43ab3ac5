//! Shared error type for the library.

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("curvature mismatch: {0} vs {1}")]
    CurvatureMismatch(f64, f64),

    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("point does not lie on the model surface chart: {0}")]
    InvalidChartPoint(&'static str),

    #[error("points are antipodal; geodesic is not unique")]
    AntipodalPoints,

    #[error("interpolation parameter {0} outside [0, 1]")]
    ParameterOutOfRange(f64),

    #[error("no comparison triangle with sides ({0}, {1}, {2}) exists in this geometry")]
    InvalidTriangle(f64, f64, f64),

    #[error("radial distance {0} exceeds the surface diameter {1}")]
    RadiusTooLarge(f64, f64),

    #[error("atom {index} has nonpositive or non-finite mass {mass}")]
    InvalidMass { index: usize, mass: f64 },

    #[error("measure must contain at least one atom")]
    EmptyMeasure,

    #[error("total masses differ: {0} vs {1}")]
    MassMismatch(f64, f64),

    #[error("alpha = {0} outside the supported range {1}")]
    AlphaOutOfRange(f64, &'static str),

    #[error("instance size {size} exceeds limit {limit}")]
    SizeLimit { size: usize, limit: usize },

    #[error("invalid transport path: {0}")]
    InvalidTransportPath(String),

    #[error("topology is infeasible for the given masses")]
    InfeasibleTopology,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
