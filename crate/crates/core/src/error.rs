use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("operator {index} is not Hermitian (max |A - A^dagger| = {deviation:e})")]
    NonHermitian { index: usize, deviation: f64 },

    #[error("operators {p} and {q} do not commute (max |[A_p, A_q]| = {norm:e})")]
    NonCommuting { p: usize, q: usize, norm: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("joint diagonalization failed: off-diagonal residue {residue:e} for operator {index}")]
    DiagonalizationFailed { index: usize, residue: f64 },

    #[error("expectation value has imaginary residue {imag:e}")]
    NonRealExpectation { imag: f64 },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("{name} {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("post-hitting norm vanished (|chi|^2 = {norm_sq:e}) at t = {time}")]
    VanishingNorm { norm_sq: f64, time: f64 },

    #[error("step rejected at t = {time}: norm changed to {norm} before renormalization; reduce dt")]
    StepRejected { time: f64, norm: f64 },

    #[error("trajectory {trajectory} has no state snapshot at t = {time}")]
    MissingSnapshot { trajectory: usize, time: f64 },

    #[error("too few hittings per window: {mean_per_window:.2} on average, need at least {required}")]
    InsufficientEvents { mean_per_window: f64, required: usize },

    #[error("Fock space dimension {dim} exceeds the cap {cap}")]
    FockDimensionExceeded { dim: usize, cap: usize },

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }
}
