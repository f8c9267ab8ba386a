use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum QuatError {
    #[error("rotation is within the Cayley chart floor of a half turn (q_s = {scalar:e})")]
    NearSingularChart { scalar: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("reference state is not consistent with the dynamics (error {error:e})")]
    ReferenceInconsistent { error: f64 },
    #[error("Euler kinematic map is singular (|cos pitch| = {cos_pitch:e})")]
    KinematicSingularity { cos_pitch: f64 },
    #[error(transparent)]
    Chart(#[from] QuatError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("Q_uu not positive definite at knot {knot} with regularization exhausted")]
    NonPositiveDefinite { knot: usize },
    #[error("rollout diverged at knot {knot} (|x| = {magnitude:e})")]
    RolloutDiverged { knot: usize, magnitude: f64 },
    #[error("initial trajectory has {got} controls, horizon needs {expected}")]
    BadInitialGuess { expected: usize, got: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: String, reason: String },
}

impl ConfigError {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
