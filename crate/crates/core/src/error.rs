use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported regime: {0}")]
    Unsupported(String),

    #[error("admissibility violated at node {node} (b = {b:.3e}, a + theta*b = {ab:.3e})")]
    Admissibility { node: usize, b: f64, ab: f64 },

    #[error("newton did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64, history: Vec<f64> },

    #[error("damping stalled: no admissible decrease along the newton direction at iteration {iteration}; try a better initial guess")]
    ConeExit { iteration: usize, residual: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
