use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid density operator: {0}")]
    InvalidState(String),

    #[error("parameter out of range: {name} = {value} (allowed {allowed})")]
    Parameter {
        name: &'static str,
        value: f64,
        allowed: String,
    },

    #[error("outcome {outcome} has probability {probability:e}, cannot condition on it")]
    ZeroProbability { outcome: usize, probability: f64 },

    #[error("filter diverged at step {step}: real outcome {outcome} has probability {probability:e} under the filtered state")]
    FilterDivergence {
        step: usize,
        outcome: usize,
        probability: f64,
    },

    #[error("policy expects {expected} observations, got {got}")]
    ObservationMismatch {
        expected: &'static str,
        got: &'static str,
    },

    #[error("control action beta = {0} outside [-1, 1]")]
    ActionOutOfRange(f64),

    #[error("episode already finished; call reset first")]
    EpisodeFinished,

    #[error("non-finite value during training: {0}")]
    NonFinite(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("missing checkpoint for cell {cell}: {path}")]
    MissingCheckpoint { cell: String, path: PathBuf },

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error("malformed results file: {0}")]
    Results(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, value: f64, allowed: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            value,
            allowed: allowed.into(),
        }
    }
}
