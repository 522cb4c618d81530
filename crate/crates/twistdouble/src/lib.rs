//! Twisted Heisenberg doubles, Poisson-Lie moment maps and u-deformed current
//! algebras, checked numerically.
//!
//! Two concrete doubles are provided: the `sl3` example `sl(3,R) ⋊ SL(3,R)`
//! with the transpose twist, and the Fourier-truncated loop double of `uwzw`.
//! All derivatives are exact forward-mode (dual numbers).

pub mod bialgebra;
pub mod checks;
pub mod double_core;
pub mod matgroup;
pub mod moments;
pub mod sl3;
pub mod ukmpoly;
pub mod uwzw;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("observable not differentiable at the point")]
    NotDifferentiable,
    #[error("basis not closed under the bracket (residual {0:e})")]
    NotClosed(f64),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("not decomposable at the infinitesimal level")]
    NotDecomposable,
    #[error("factorization domain violated: {what} = {value}")]
    Domain { what: String, value: f64 },
    #[error("mode {0} outside the band")]
    OutOfBand(i64),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unknown identifier: {0}")]
    Unknown(String),
}

pub use matgroup::{Alg, Cx, Elem, Observable, Real, C64, M3};
