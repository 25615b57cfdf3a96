//! Cyclic secure aggregation over an additively homomorphic cipher.
//!
//! Users form a loop. A randomly chosen initiator adds a large Gaussian mask
//! to its gradient, encrypts it and passes it on; every other user encrypts
//! its own gradient and adds it homomorphically ("encryption-summation")
//! before forwarding. When the ciphertext returns, the initiator subtracts
//! the mask under encryption and decrypts the sum.

mod cipher;
mod paillier;
mod ring;
mod wire;

pub use cipher::{
    AdditiveCipher, CipherError, CipherSuite, CipherVector, Decryptor, NullCipher, SchemeTag,
};
pub use paillier::{keygen, AheKeyPair, PaillierPrivateKey, PaillierPublicKey, SUPPORTED_KEY_BITS};
pub use ring::{
    ring_aggregate, run_ring, MaskPolicy, MaskVector, RingRngs, RingState, TraceMessage,
    AUTO_MASK_FLOOR, MIN_MASK_SIGMA,
};

use thiserror::Error;

use crate::numeric::NumericError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CsaheError {
    /// Fewer than three users: with two, the initiator can subtract its own
    /// gradient from the sum and read the other user's gradient.
    #[error("secure aggregation needs at least 3 users, got {users}")]
    TooFewUsers { users: usize },

    #[error("mask standard deviation {sigma} must exceed {MIN_MASK_SIGMA}")]
    WeakMask { sigma: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error(transparent)]
    Cipher(#[from] CipherError),

    #[error(transparent)]
    Numeric(#[from] NumericError),

    #[error("invalid argument: {0}")]
    Argument(String),
}
