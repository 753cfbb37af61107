use thiserror::Error;

/// Errors raised by the model levels and the experiment harness.
#[derive(Debug, Error)]
pub enum LabError {
    /// A precondition on the inputs was violated.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// The reduced action left the open strip 0 < K < 1.
    #[error("domain error: K = {k} left (0, 1) at t = {t} (phi1 = {phi1})")]
    Domain { t: f64, phi1: f64, k: f64 },

    /// The adaptive integrator could not take a step large enough to make progress.
    #[error("step size underflow at t = {t} (h = {h:e}); state = {state:?}")]
    StepUnderflow { t: f64, h: f64, state: Vec<f64> },

    /// The adaptive integrator exhausted its step budget.
    #[error("step budget of {max_steps} exhausted at t = {t}")]
    TooManySteps { t: f64, max_steps: usize },

    /// The PDE state became non-finite.
    #[error("non-finite spectral state after step {last_healthy_step} (t = {t})")]
    NonFinite { last_healthy_step: usize, t: f64 },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed json in {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

impl LabError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        LabError::Invalid(msg.into())
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        LabError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// True for failures of the numerics (as opposed to bad inputs).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            LabError::Domain { .. }
                | LabError::StepUnderflow { .. }
                | LabError::TooManySteps { .. }
                | LabError::NonFinite { .. }
        )
    }
}

pub type Result<T, E = LabError> = std::result::Result<T, E>;
