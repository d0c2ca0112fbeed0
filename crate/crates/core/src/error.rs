use thiserror::Error;

/// Iteration record attached to solver failures.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SolverDiagnostics {
    pub iterations: usize,
    /// Relative change of the objective at the last iteration.
    pub last_rel_change: f64,
    /// Objective value (an L_q error) at the last iterate.
    pub objective: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("grid of {grid} points is too coarse for degree {degree} (need at least {needed})")]
    GridTooCoarse {
        grid: usize,
        degree: usize,
        needed: usize,
    },
    #[error("degree {degree} exceeds kernel truncation {truncation}")]
    TruncationExceeded { degree: usize, truncation: usize },
    #[error("grid sizes differ: {left} vs {right}")]
    GridMismatch { left: usize, right: usize },
    #[error("invalid exponent {0}")]
    InvalidExponent(f64),
    #[error("coefficient vectors have different lengths ({cos} cosine, {sin} sine)")]
    CoefficientLength { cos: usize, sin: usize },
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("polynomial has degree zero; discretization needs degree >= 1")]
    DegreeZero,
    #[error("solver did not converge after {} iterations (last relative change {:.3e})", .0.iterations, .0.last_rel_change)]
    NonConvergence(SolverDiagnostics),
    #[error("exponents p = {p}, q = {q} lie outside the supported branches")]
    OutOfBranch { p: f64, q: f64 },
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("ambient dimension {m} exceeds the brute-force guard {max}")]
    DimensionGuard { m: usize, max: usize },
    #[error("no rate is recorded for this regime: {0}")]
    UncoveredRegime(String),
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
