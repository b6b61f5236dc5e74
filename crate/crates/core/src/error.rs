use thiserror::Error;

/// Errors raised across the engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("measure has no atoms")]
    EmptyMeasure,
    #[error("negative weight {weight} at atom {index}")]
    NegativeWeight { index: usize, weight: f64 },
    #[error("weights sum to {sum}, expected 1 within 1e-9")]
    WeightSumMismatch { sum: f64 },
    #[error("atoms and weights disagree: {0}")]
    MalformedMeasure(String),
    #[error("probability level {0} outside (0, 1)")]
    OutOfRange(f64),
    #[error("integrand is not finite at atom {0}")]
    NonFiniteIntegrand(usize),

    #[error("matrix is not symmetric (relative asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("eigensolver did not converge within {0} sweeps")]
    NoConvergence(usize),
    #[error("spectral argument must lie in the upper half-plane, got Im z = {0}")]
    LowerHalfPlane(f64),
    #[error("bad histogram range or bin count: {0}")]
    BadRange(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("model invariant violated: {0}")]
    SpecInvariantViolated(String),
    #[error("profile is not finite at ({s}, {t})")]
    NonFiniteProfile { s: f64, t: f64 },
    #[error("observation times are not a partition of [0, 1]: {0}")]
    BadPartition(String),
    #[error("matrix autoregression is not stationary: max|a| * max|b| = {0}")]
    NotStationary(f64),
    #[error("expression error: {0}")]
    Expression(String),

    #[error("link function is negative or non-finite ({value}) at atom pair ({a_index}, {b_index})")]
    BadLink { a_index: usize, b_index: usize, value: f64 },
    #[error("invalid solver input: {0}")]
    BadConfig(String),
    #[error("no grid point converged")]
    NothingConverged,
    #[error("density mass {0} outside [0.97, 1.03]")]
    MassOutOfBand(f64),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("seed list is empty")]
    EmptySeeds,
}

pub type Result<T> = std::result::Result<T, Error>;
