//! Crate-wide error type. Verification failures carry the measured defect so
//! callers can report how far an identity missed.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite entry in {0}")]
    NonFinite(String),

    #[error("matrix is not Hermitian (defect {defect:.3e})")]
    NotHermitian { defect: f64 },

    #[error("vectors are not orthonormal: {0}")]
    NotOrthonormal(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("slot {slot} out of range for {factors} tensor factors")]
    SlotOutOfRange { slot: usize, factors: usize },

    #[error("operators exceed a trace-nonincreasing operation (defect {defect:.3e})")]
    TraceIncreasing { defect: f64 },

    #[error("measurement family {family} does not sum to the identity (defect {defect:.3e})")]
    IncompleteFamily { family: usize, defect: f64 },

    #[error("Gram check failed: {0}")]
    GramCheck(String),

    #[error(
        "outcome operator (J={family}, i={outcome}) does not decompose over the error operators (residual {residual:.3e})"
    )]
    Decomposition {
        family: usize,
        outcome: usize,
        residual: f64,
    },

    #[error(
        "index sets of family {family} overlap: k={k} appears for outcomes i={first} and i={second}"
    )]
    Disjointness {
        family: usize,
        k: usize,
        first: usize,
        second: usize,
    },

    #[error("index set for (J={family}, i={outcome}) is empty")]
    EmptyIndexSet { family: usize, outcome: usize },

    #[error("Knill-Laflamme check failed: {0}")]
    KnillLaflamme(String),

    #[error("protocol failure: {0}")]
    Protocol(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors that mean "the mathematics did not check out", as
    /// opposed to malformed input.
    pub fn is_verification_failure(&self) -> bool {
        matches!(
            self,
            Error::GramCheck(_)
                | Error::Decomposition { .. }
                | Error::Disjointness { .. }
                | Error::EmptyIndexSet { .. }
                | Error::KnillLaflamme(_)
                | Error::Protocol(_)
        )
    }
}
