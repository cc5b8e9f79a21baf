use thiserror::Error;

pub type Result<T, E = FnlsError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum FnlsError {
    /// A parameter is outside the range an operation accepts.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// The operation is well defined for the value but not supported here.
    #[error("unsupported parameter `{name}`: {reason}")]
    Unsupported { name: &'static str, reason: String },

    #[error("fields live on different grids ({left} vs {right})")]
    GridMismatch { left: String, right: String },

    /// The preconditioned fixed-point iteration of an implicit stage did not converge.
    #[error(
        "stage fixed point diverged{} after {iterations} iterations (last relative change {residual:e})",
        stage.map(|s| format!(" at stage {s}")).unwrap_or_default()
    )]
    StageDivergence {
        stage: Option<usize>,
        iterations: usize,
        residual: f64,
    },

    #[error("time stepping failed at step {step} (t = {time}): {source}")]
    Evolve {
        step: usize,
        time: f64,
        #[source]
        source: Box<FnlsError>,
    },

    #[error("profile iteration did not converge after {iterations} iterations (last residual {last:e})")]
    ProfileDivergence {
        iterations: usize,
        last: f64,
        history: Vec<f64>,
    },

    #[error("wave tracking failed: {0}")]
    Tracking(String),

    #[error("study aborted after {completed} completed rows: {source}")]
    PartialStudy {
        completed: usize,
        #[source]
        source: Box<FnlsError>,
    },

    #[error("malformed snapshot: {0}")]
    Snapshot(String),

    #[error("configuration error in `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl FnlsError {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        FnlsError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        FnlsError::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for failures of the numerics (divergence, non-convergence) as
    /// opposed to bad input or I/O.
    pub fn is_numerical(&self) -> bool {
        match self {
            FnlsError::StageDivergence { .. }
            | FnlsError::ProfileDivergence { .. }
            | FnlsError::Tracking(_) => true,
            FnlsError::Evolve { source, .. } | FnlsError::PartialStudy { source, .. } => {
                source.is_numerical()
            }
            _ => false,
        }
    }
}
