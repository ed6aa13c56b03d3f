use thiserror::Error;

use crate::field::FieldError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Core(#[from] naim_core::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// Stable machine-readable category for error records.
    pub fn kind(&self) -> String {
        match self {
            CliError::Config(_) => "config".into(),
            CliError::Field(_) => "field".into(),
            CliError::Core(e) => format!("core.{}", core_kind(e)),
            CliError::Io(_) => "io".into(),
            CliError::Csv(_) => "csv".into(),
            CliError::Json(_) => "json".into(),
        }
    }
}

fn core_kind(e: &naim_core::Error) -> &'static str {
    use naim_core::Error::*;
    match e {
        StepUnderflow { .. } => "step_underflow",
        NonFinite { .. } => "non_finite",
        TooManySteps { .. } => "too_many_steps",
        NoCrossing { .. } => "no_crossing",
        NewtonFailed { .. } => "newton_failed",
        SweepDiverged { .. } => "sweep_diverged",
        FrameNotConverged { .. } => "frame_not_converged",
        FrameDiscontinuity { .. } => "frame_discontinuity",
        BasinEscape { .. } => "basin_escape",
        DomainExit { .. } => "domain_exit",
        ContractionFailure(_) => "contraction_failure",
        ZeroFiber => "zero_fiber",
        RetractionCap(_) => "retraction_cap",
        RefinementDiverged { .. } => "refinement_diverged",
        InvalidInput(_) => "invalid_input",
    }
}
