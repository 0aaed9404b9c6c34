use thiserror::Error;

use crate::radial_planar::TerminalTag;

/// Every failure the library reports.
#[derive(Debug, Error)]
pub enum Error {
    #[error("grid size {0} must be even and at least 16")]
    InvalidGrid(usize),
    #[error("fields live on different grids (n = {0} vs n = {1})")]
    GridMismatch(usize, usize),
    #[error("field contains a non-finite value")]
    NonFinite,
    #[error("right-hand side has mean {mean:e}; the periodic Poisson problem needs zero mean")]
    MeanNotZero { mean: f64 },
    #[error("points coincide on the torus")]
    DiagonalPoint,
    #[error("vortices {0} and {1} coincide; merge their multiplicities instead")]
    VortexOnVortex(usize, usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no convergence after {iterations} iterations (last increment {increment:e})")]
    NotConverged { iterations: usize, increment: f64 },
    #[error("iterate increased by {amount:e} at iteration {iteration}; kappa is too small")]
    NonMonotoneStep { iteration: usize, amount: f64 },
    #[error(
        "iterates keep falling (min {min_v:.2} after {iterations} iterations): \
         no topological solution at this coupling"
    )]
    NonExistence { iterations: usize, min_v: f64 },
    #[error("subsolution inequality violated by {worst:e} at grid index {index}")]
    SubsolutionFailed { worst: f64, index: usize },
    #[error("Krylov solve stalled at relative residual {relative_residual:e} after {iterations} iterations")]
    LinearSolveStalled { relative_residual: f64, iterations: usize },
    #[error("Newton iteration {iteration} could not reduce the residual {residual:e}")]
    NewtonDiverged { iteration: usize, residual: f64 },
    #[error("eigen iteration stalled with residual {residual:e}")]
    IterationStalled { residual: f64 },
    #[error("ODE integrator failed to meet tolerance near r = {r:e}")]
    StepFailure { r: f64 },
    #[error("flux limit {limit} and quadrature {quadrature} disagree")]
    FluxMismatch { limit: f64, quadrature: f64 },
    #[error("bracket ends share the outcome {low:?} / {high:?}")]
    NoBracket { low: TerminalTag, high: TerminalTag },
    #[error("planar box covers radius {available} but the cutoff needs {needed}")]
    PlanarDomainTooSmall { needed: f64, available: f64 },
    #[error("contraction increments stopped shrinking after {iterations} iterations")]
    ContractionFailed { iterations: usize },
    #[error("ball of radius {radius:e} reaches vortex {index} at distance {distance:e}")]
    ClusterNotIsolated { index: usize, distance: f64, radius: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed field dump: {0}")]
    Format(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
