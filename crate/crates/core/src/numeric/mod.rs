//! Dense parameter vectors, seeded random streams and fixed-point encoding.

mod fixed;
mod rng;
mod vector;

pub use fixed::FixedPointCodec;
pub use rng::{gaussian_vector, SeededRng};
pub use vector::ParamVector;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("value {value} does not fit the fixed-point plaintext range")]
    Overflow { value: f64 },

    #[error(
        "{summands} summands of magnitude up to {max_abs} can overflow a {modulus_bits}-bit plaintext ring"
    )]
    Headroom {
        summands: usize,
        max_abs: f64,
        modulus_bits: u32,
    },

    #[error("no input vectors")]
    Empty,

    #[error("invalid argument: {0}")]
    Argument(String),
}
