use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid input: {0}")]
    Input(String),

    /// A non-finite state appeared while integrating. `last_valid` indexes the
    /// last output time whose state is finite.
    #[error("integration diverged at t = {t} (last valid output index {last_valid})")]
    Divergence { t: f64, last_valid: usize },

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("parse error in {path:?} at row {row}: {msg}")]
    Parse { path: PathBuf, row: usize, msg: String },

    #[error("{0} is unavailable")]
    Unavailable(&'static str),

    #[error("training aborted: {0}")]
    TrainingAborted(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
