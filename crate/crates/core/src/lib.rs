//! Construction and verification of quantum error-correcting codes built
//! from solutions of the mean king's problem.
//!
//! The library is organised bottom-up: dense complex linear algebra
//! ([`numerics`]), the measurement/error/index-set vocabulary ([`model`]),
//! derivation of error operations from a solution pair ([`solution_engine`]),
//! code construction and recovery ([`code_builder`]), and the full
//! king-versus-Alice game ([`protocol`]). The [`cli`] module exposes all of
//! it behind a small command-line tool.

pub mod cli;
pub mod code_builder;
pub mod error;
pub mod model;
pub mod numerics;
pub mod protocol;
pub mod sampling;
pub mod solution_engine;

pub use error::{Error, Result};
pub use numerics::{ComplexMatrix, StateVector, Tolerance};
