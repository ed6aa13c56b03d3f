use thiserror::Error;

/// Failure modes shared by every solver in the crate.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("non-finite state encountered at t = {t}")]
    NonFinite { t: f64 },
    #[error("step budget of {max_steps} exhausted at t = {t}")]
    TooManySteps { t: f64, max_steps: usize },
    #[error("no level crossing within |t| <= {t_max}")]
    NoCrossing { t_max: f64 },
    #[error("newton failed in {context} (residual {residual:e})")]
    NewtonFailed { context: String, residual: f64 },
    #[error("manifold sweeps diverged at sweep {sweep} (defect {defect:e})")]
    SweepDiverged { sweep: usize, defect: f64 },
    #[error("subspace iteration did not converge at node {node} (angle {angle:e})")]
    FrameNotConverged { node: usize, angle: f64 },
    #[error("frame field jumps by {degrees:.2} degrees between nodes {a} and {b}; refine the grid")]
    FrameDiscontinuity { a: usize, b: usize, degrees: f64 },
    #[error("orbit did not enter the trusted tube within t = {t_total}")]
    BasinEscape { t_total: f64 },
    #[error("base point left the grid domain on axis {axis} (value {value})")]
    DomainExit { axis: usize, value: f64 },
    #[error("fiber contraction fails inside the tube: {0}")]
    ContractionFailure(String),
    #[error("zero fiber vector has no ray")]
    ZeroFiber,
    #[error("radial retraction hit the iteration cap ({0} iterations)")]
    RetractionCap(usize),
    #[error("refinement sequence diverged at depth {depth}")]
    RefinementDiverged { depth: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
