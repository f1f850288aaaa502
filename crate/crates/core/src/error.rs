//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid size must be even and at least 16, got {0}")]
    InvalidGridSize(usize),
    #[error("dealias fraction must be in (0, 1], got {0}")]
    InvalidDealiasFraction(f64),
    #[error("field must be mean-free (|mean| = {mean:.3e})")]
    NotMeanFree { mean: f64 },
    #[error("vector field is not divergence-free (relative residual {residual:.3e})")]
    NotDivergenceFree { residual: f64 },
    #[error("mollifier width must be nonnegative, got {0}")]
    NegativeMollifierWidth(f64),
    #[error("Lp norm requires p >= 1, got {0}")]
    InvalidLpExponent(f64),
    #[error("grid mismatch: {0} vs {1} points per side")]
    GridMismatch(usize, usize),
    #[error("time step must be positive and finite, got {0}")]
    InvalidTimeStep(f64),
    #[error("simulation produced a non-finite field at t = {t}")]
    NumericalBlowup { t: f64 },
    #[error("averaging window [{start}, {end}] holds no samples")]
    EmptyWindow { start: f64, end: f64 },
    #[error("{0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
