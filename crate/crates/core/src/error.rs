use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("radial grid not converged: eigenvalue drift {drift_cm1:.3e} cm-1 exceeds {tolerance_cm1:.1e} cm-1 (v={v}, J={j}); use more grid points")]
    Convergence {
        v: u32,
        j: u32,
        drift_cm1: f64,
        tolerance_cm1: f64,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("eigensolver failed to converge (dim {dim}, max |H_ij| = {max_abs:.3e}, frobenius norm = {frobenius:.3e})")]
    Eigensolver {
        dim: usize,
        max_abs: f64,
        frobenius: f64,
    },

    #[error("integration failure at t = {t:.6e}: norm drift {drift:.3e} exceeds {limit:.1e}; reduce dt (currently {dt})")]
    Integration {
        t: f64,
        drift: f64,
        limit: f64,
        dt: f64,
    },

    #[error("basis too large: {what} = {value} exceeds limit {limit}")]
    Size {
        what: &'static str,
        value: usize,
        limit: usize,
    },

    #[error("empty state subset")]
    EmptySubset,

    #[error("frequency grids differ between spectra")]
    GridMismatch,

    #[error("time grid is not uniform")]
    NonUniformGrid,

    #[error("expected exactly two peaks in window [{lo:.6e}, {hi:.6e}], found {}: {candidates:?}", candidates.len())]
    Ambiguity {
        lo: f64,
        hi: f64,
        candidates: Vec<f64>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
