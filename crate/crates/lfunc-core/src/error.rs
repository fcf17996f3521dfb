use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("space dimension {dim} exceeds the configured cap {cap}")]
    Sizing { dim: usize, cap: usize },
    #[error("mode index {index} out of range for {count} modes")]
    InvalidMode { index: usize, count: usize },
    #[error("momentum labels are required for this operation")]
    MissingLabels,
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("kernel reconstruction is ill-posed (condition number {cond:e})")]
    Inversion { cond: f64 },
    #[error("integration failed: {0}")]
    Integration(String),
    #[error("switching tail not converged: |h(aT)| = {tail:e} (try a larger horizon)")]
    Horizon { tail: f64 },
    #[error("gap collapse at g = {g}: gap {gap:e} below {gap_min:e}")]
    Degeneracy { g: f64, gap: f64, gap_min: f64 },
    #[error("eigenvector tracking lost at g = {g}: overlap {overlap}")]
    Tracking { g: f64, overlap: f64 },
    #[error("degree overflow: {0:e} of weight left the representable coefficient range")]
    Overflow(f64),
    #[error("amplitude too small to take a phase: {0:e}")]
    DegenerateAmplitude(f64),
    #[error("convention search failed: {0}")]
    Convention(String),
    #[error("input is not a state: {0}")]
    NotAState(String),
}

pub type Result<T> = std::result::Result<T, Error>;
