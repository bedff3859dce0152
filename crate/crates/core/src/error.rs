use thiserror::Error;

/// Errors raised across the planning pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("state lies within {distance:e} DU of the {body}")]
    Singularity { body: &'static str, distance: f64 },

    #[error("degenerate LVLH frame: angular momentum magnitude {0:e}")]
    DegenerateFrame(f64),

    #[error("integrator step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("integrator exceeded {0} steps")]
    TooManySteps(usize),

    #[error("matrix exponential overflow (norm {0:e})")]
    ExpmOverflow(f64),

    #[error("target is not reachable by the control map (residual {0:e})")]
    InfeasibleTarget(f64),

    #[error("cone program failed: {0}")]
    Socp(String),

    #[error("refinement did not converge after {0} iterations")]
    RefineNonConvergence(usize),

    #[error("differential correction failed: {0}")]
    Shooting(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("catalog error at row {row}: {msg}")]
    Catalog { row: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
