use thiserror::Error;

use crate::tensor::Space;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("operator is not Hermitian (max |H - H^dagger| entry = {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("Jacobi eigensolver did not converge within {sweeps} sweeps (off-diagonal norm {off_norm:e})")]
    ConvergenceFailure { sweeps: usize, off_norm: f64 },

    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("degenerate spectrum: {which} values at indices {first} and {second} coincide")]
    DegenerateSpectrum {
        which: &'static str,
        first: usize,
        second: usize,
    },

    #[error("constructed evolution violates condition M2 (residual {residual:e})")]
    ConditionM2Violation { residual: f64 },

    #[error("state is not normalized (norm {norm})")]
    NotNormalized { norm: f64 },

    #[error("expected an operator on space {expected:?}, got {found:?}")]
    WrongSpace { expected: Space, found: Space },

    #[error("invalid basis: {0}")]
    InvalidBasis(String),

    #[error("mixture spectrum stayed degenerate after {retries} draws and the blocks are not jointly diagonal")]
    RetriesExhausted { retries: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("non-finite value in input")]
    NonFinite,
}

pub type Result<T> = std::result::Result<T, Error>;
