use thiserror::Error;

/// Everything that can go wrong in the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid region: {0}")]
    InvalidRegion(String),

    #[error("empty region has no distance")]
    EmptyRegion,

    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("norm index p = {0} is outside [1, inf]")]
    InvalidNorm(f64),

    #[error("non-finite coefficient {name} at cell {cell}, t = {time}")]
    NonFiniteCoefficient { name: &'static str, cell: usize, time: f64 },

    #[error("invalid coefficients: {0}")]
    InvalidCoefficients(String),

    #[error("comparability check failed: worst ratio {worst_ratio:.4} exceeds c3 = {c3}")]
    Comparability { worst_ratio: f64, c3: f64 },

    #[error("transition layer under-resolved: h = {h:.3e} > d/(8 c3^2) = {limit:.3e}")]
    UnderResolved { h: f64, limit: f64 },

    #[error("sharp mode requires separated slabs: {0}")]
    NotSlabs(String),

    #[error("cutoff plateau violated: {0}")]
    Plateau(String),

    #[error("invalid solver configuration: {0}")]
    InvalidSolver(String),

    #[error("CFL violation: advective CFL number {cfl:.4} > 1")]
    Cfl { cfl: f64 },

    #[error("linear solve failed: {reason} (residual {residual:.3e})")]
    LinearSolve { reason: String, residual: f64 },

    #[error("tilting exponent not localized to U: |grad phi| = {0:.3e} outside U")]
    NotLocalized(f64),

    #[error("propagator is missing column {0}")]
    MissingColumn(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("Picard iteration did not converge in {iterations} iterations (last update {update:.3e})")]
    PicardDiverged { iterations: usize, update: f64 },

    #[error("velocity box too small: boundary mass {mass:.3e} exceeds {limit:.1e}")]
    VelocityBox { mass: f64, limit: f64 },

    #[error("assumption violated: {0}")]
    Assumption(String),

    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;
