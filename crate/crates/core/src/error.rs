use thiserror::Error;

/// Errors raised by models, path simulation, estimators and diagnostics.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    /// A state became non-finite. `step` counts fine-grid steps from t = 0.
    #[error("numeric overflow at step {step} (t = {time})")]
    NumericOverflow { step: u64, time: f64 },

    #[error("adaptive timestep underflow at t = {time}: h = {h:e}")]
    AdaptivityFailure { time: f64, h: f64 },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("non-finite level sample on level {level}, path {path_index}")]
    NonFiniteSample { level: usize, path_index: u64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
