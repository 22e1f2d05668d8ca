use thiserror::Error;

use crate::dynamics::Trajectory;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid size {0}: must be a power of two and at least 16")]
    GridSize(usize),

    #[error("grid size mismatch: {0} vs {1}")]
    GridMismatch(usize, usize),

    #[error("unsupported derivative order {0} (expected 1..=4)")]
    DerivativeOrder(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("potential rejected: {0}")]
    Potential(String),

    #[error("value {value} outside tabulated hull domain [{lo}, {hi}]")]
    OutsideHull { value: f64, lo: f64, hi: f64 },

    #[error("{solver} aborted at t = {t}: {reason}")]
    SolverAbort {
        solver: &'static str,
        t: f64,
        reason: String,
        /// Trajectory up to the last valid state.
        partial: Box<Trajectory>,
    },

    #[error("nonlinear solve did not converge at t = {t}: residual {residual:e} after {iterations} iterations")]
    NonConvergence {
        t: f64,
        residual: f64,
        iterations: usize,
        partial: Box<Trajectory>,
    },

    #[error("config error{}: {message}", location.as_ref().map(|l| format!(" at {l}")).unwrap_or_default())]
    Config { location: Option<String>, message: String },

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    #[error("output directory {0} is not empty (use --force to overwrite)")]
    OutputExists(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            location: Some(location.into()),
            message: message.into(),
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidArgument(message.into())
    }
}
