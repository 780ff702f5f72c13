//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("non-finite input to {context}: {value}")]
    NonFinite { context: &'static str, value: f64 },

    #[error("{context}: value {value} outside [{lo}, {hi}]")]
    OutOfRange {
        context: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("quadrature did not converge over [{a}, {b}]: error estimate {err:.3e} > requested {tol:.3e} after {evals} evaluations")]
    QuadratureNonConvergence {
        a: f64,
        b: f64,
        err: f64,
        tol: f64,
        evals: usize,
    },

    #[error("extrema history violation: {0}")]
    History(String),

    #[error("reluctance table: {0}")]
    Table(String),

    #[error("{path}:{line}: {msg}")]
    Csv {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("simulation failure at t = {t:.9} s: {msg}")]
    Simulation { t: f64, msg: String },

    #[error("optimizer failure: {0}")]
    Optimizer(String),

    #[error("pipeline ordering: {0}")]
    Pipeline(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
