use thiserror::Error;

/// Errors raised by the finite-window estimators.
#[derive(Debug, Error)]
pub enum Error {
    #[error("index mismatch: expected a sequence of length {expected}, got {found}")]
    IndexMismatch { expected: usize, found: usize },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("index sets are not integer lattices")]
    NonLattice,

    #[error("windows are not nested: {0}")]
    NotNested(String),

    #[error("a seed is required by the multistart estimator")]
    MissingSeed,

    #[error("matrix is singular on the window")]
    Singular,

    #[error("matrix is ill-conditioned on the window (condition estimate {0:e})")]
    IllConditioned(f64),

    #[error("{0} did not converge")]
    NonConvergence(String),

    #[error("linear program failed: {0}")]
    LinearProgram(String),

    #[error("quadrature did not converge on [{a}, {b}]")]
    Quadrature { a: f64, b: f64 },

    #[error("decay fit needs at least 4 usable offsets, found {0}")]
    InsufficientFit(usize),
}

impl Error {
    /// True for failures of a numerical method, as opposed to bad input or
    /// violated hypotheses.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Singular
                | Error::IllConditioned(_)
                | Error::NonConvergence(_)
                | Error::LinearProgram(_)
                | Error::Quadrature { .. }
                | Error::InsufficientFit(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
