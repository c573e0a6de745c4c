use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A parameter combination that can never be valid (grid size, cutoffs, mismatched grids).
    #[error("configuration error: {0}")]
    Config(String),

    /// An argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A field that breaks a structural invariant (mean-zero, divergence-free).
    #[error("invariant violation: {0}")]
    Invariant(String),

    #[error("CFL violation at step {step}: courant number {courant:.4} > 0.5 (max|u| = {max_u:.6e})")]
    Cfl { step: u64, courant: f64, max_u: f64 },

    #[error("divergence at step {step}: {reason}")]
    Divergence { step: u64, reason: String },

    /// Time samples fed out of order to an accumulator.
    #[error("ordering error: t = {t} does not exceed previous sample {previous}")]
    Ordering { t: f64, previous: f64 },

    /// A quantity requested before it is defined.
    #[error("undefined: {0}")]
    Undefined(String),
}

pub type Result<T> = std::result::Result<T, Error>;
