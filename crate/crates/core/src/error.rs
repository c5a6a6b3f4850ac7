use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("quadrature did not converge: estimate {estimate:e} with error bound {error_bound:e}")]
    Quadrature { estimate: f64, error_bound: f64 },

    #[error("iteration diverged after {iterations} steps (last residual {residual:e})")]
    Diverged { iterations: usize, residual: f64, tail: Vec<Vec<f64>> },

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("no transition found in the scanned range [{lo}, {hi}]")]
    NoTransition { lo: f64, hi: f64 },

    #[error("langevin member {member} diverged at step {step}: {reason}")]
    MemberDiverged { member: usize, step: usize, reason: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidConfig { field, reason: reason.into() }
    }
}
