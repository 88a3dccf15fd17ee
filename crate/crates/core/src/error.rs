use thiserror::Error;

/// Errors raised by the numerical kernels and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("singularity: {0}")]
    Singularity(String),
    #[error("convergence failure after {iterations} iterations (residual {residual:.3e})")]
    Convergence {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },
    #[error("solver error: {0}")]
    Solver(String),
    #[error("particle collision near t = {time:.6e} (estimated blow-up at t = {blowup:.6e})")]
    Collision { time: f64, blowup: f64 },
    #[error("not applicable: {0}")]
    NotApplicable(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("tracking error: {0}")]
    Tracking(String),
    #[error("resolution error: {0}")]
    Resolution(String),
    #[error("comparison error: {0}")]
    Comparison(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be finite, got {v}")))
    }
}
