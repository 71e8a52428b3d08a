use thiserror::Error;

/// Errors surfaced by the estimation and attack-synthesis layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical failure in {context}: condition number {condition:.3e}")]
    Numerical { context: String, condition: f64 },

    #[error("gain synthesis failed: {0}")]
    GainSynthesis(String),

    #[error("detector calibration failed: {0}")]
    Calibration(String),

    #[error("estimator divergence at t = {t}: max node deviation {norm:.3e}")]
    Instability { t: usize, norm: f64 },

    #[error("iteration did not converge: {0}")]
    NonConvergence(String),

    #[error("stationarity solve failed at node {node}: {msg}")]
    Solver { node: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;
