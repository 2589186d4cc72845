use thiserror::Error;

use crate::spectral::GalerkinState;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid of {grid_points} intervals cannot resolve {n_modes} modes (need at least {required})")]
    Sizing {
        n_modes: usize,
        grid_points: usize,
        required: usize,
    },

    #[error("grid mismatch: expected {expected} nodes, got {actual}")]
    GridMismatch { expected: usize, actual: usize },

    #[error("mode count mismatch: state has {state} modes, basis has {basis}")]
    ModeMismatch { state: usize, basis: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("solution blew up at step {step} (t = {time})")]
    BlowUp {
        step: usize,
        time: f64,
        last_finite: Box<GalerkinState>,
    },

    #[error("inconsistent Wiener path refinement: {0}")]
    PathRefinement(String),

    #[error("all {n_paths} Monte-Carlo paths blew up")]
    AllPathsFailed { n_paths: usize },

    #[error("optimizer failure: {0}")]
    Optimizer(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
