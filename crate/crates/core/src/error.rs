use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid time {0}: must be finite and non-negative")]
    InvalidTime(f64),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("step index {index} out of range (valid: {min}..={max})")]
    StepOutOfRange { index: usize, min: usize, max: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("{path}: line {line}: {msg}")]
    Csv { path: String, line: u64, msg: String },

    #[error("feature '{0}' is constant; cannot standardize")]
    ConstantFeature(String),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("unsupported model file version {found} (this build reads version {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },

    #[error("corrupted model file: {0}")]
    CorruptedModel(String),

    #[error("training diverged at update {update}: loss = {loss}")]
    Diverged { update: usize, loss: f64 },

    #[error("generation hit a non-finite state at reverse step n = {step}")]
    NonFiniteState { step: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
