use num_bigint::BigUint;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::paillier::AheKeyPair;
use crate::numeric::{FixedPointCodec, NumericError, ParamVector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CipherError {
    #[error(transparent)]
    Numeric(#[from] NumericError),

    #[error("cannot combine {left:?} and {right:?} ciphertexts")]
    SchemeMismatch { left: SchemeTag, right: SchemeTag },

    #[error("ciphertexts were produced under different keys")]
    KeyMismatch,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("plaintext outside the cipher's message space")]
    PlaintextRange,

    #[error("decryption failed: {0}")]
    Decrypt(String),

    #[error("malformed ciphertext or key: {0}")]
    Malformed(String),

    #[error("invalid argument: {0}")]
    Argument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeTag {
    /// Identity cipher over the fixed-point ring; "ciphertexts" are encoded plaintexts.
    Null,
    Paillier,
}

impl SchemeTag {
    pub(crate) fn to_byte(self) -> u8 {
        match self {
            SchemeTag::Null => 0,
            SchemeTag::Paillier => 1,
        }
    }

    pub(crate) fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(SchemeTag::Null),
            1 => Some(SchemeTag::Paillier),
            _ => None,
        }
    }
}

/// Encrypted fixed-point vector, one ciphertext element per coordinate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CipherVector {
    pub(crate) scheme: SchemeTag,
    pub(crate) key_id: String,
    pub(crate) elements: Vec<BigUint>,
}

impl CipherVector {
    pub fn scheme(&self) -> SchemeTag {
        self.scheme
    }

    pub fn key_id(&self) -> &str {
        &self.key_id
    }

    pub fn dim(&self) -> usize {
        self.elements.len()
    }

    pub fn elements(&self) -> &[BigUint] {
        &self.elements
    }
}

/// Public (encryption and homomorphic addition) side of an additively
/// homomorphic cipher over the fixed-point plaintext ring.
pub trait AdditiveCipher: Send + Sync {
    fn scheme(&self) -> SchemeTag;

    fn key_id(&self) -> &str;

    fn codec(&self) -> &FixedPointCodec;

    /// Bits available for accumulated plaintexts before they wrap.
    fn plaintext_capacity_bits(&self) -> u64;

    fn encrypt_element(&self, encoded: u128, rng: &mut dyn RngCore)
        -> Result<BigUint, CipherError>;

    fn add_elements(&self, a: &BigUint, b: &BigUint) -> BigUint;

    fn element_in_range(&self, c: &BigUint) -> bool;

    /// Coordinate-wise encryption of the fixed-point encoding of `v`.
    fn encrypt_vector(
        &self,
        v: &ParamVector,
        rng: &mut dyn RngCore,
    ) -> Result<CipherVector, CipherError> {
        let encoded = self.codec().encode_vector(v)?;
        self.encrypt_encoded(&encoded, rng)
    }

    /// Coordinate-wise encryption of already encoded ring elements.
    fn encrypt_encoded(
        &self,
        encoded: &[u128],
        rng: &mut dyn RngCore,
    ) -> Result<CipherVector, CipherError> {
        let elements = encoded
            .iter()
            .map(|&m| self.encrypt_element(m, rng))
            .collect::<Result<_, _>>()?;
        Ok(CipherVector {
            scheme: self.scheme(),
            key_id: self.key_id().to_string(),
            elements,
        })
    }

    /// Ciphertext whose decryption is the coordinate-wise plaintext sum.
    fn add_cipher(&self, a: &CipherVector, b: &CipherVector) -> Result<CipherVector, CipherError> {
        for c in [a, b] {
            if c.scheme != self.scheme() {
                return Err(CipherError::SchemeMismatch {
                    left: c.scheme,
                    right: self.scheme(),
                });
            }
            if c.key_id != self.key_id() {
                return Err(CipherError::KeyMismatch);
            }
        }
        if a.dim() != b.dim() {
            return Err(CipherError::Dimension {
                expected: a.dim(),
                actual: b.dim(),
            });
        }
        Ok(CipherVector {
            scheme: a.scheme,
            key_id: a.key_id.clone(),
            elements: a
                .elements
                .iter()
                .zip(&b.elements)
                .map(|(x, y)| self.add_elements(x, y))
                .collect(),
        })
    }

    /// Homomorphic subtraction of a plaintext vector: `a + Enc(-r)`.
    fn sub_cipher(
        &self,
        a: &CipherVector,
        r: &ParamVector,
        rng: &mut dyn RngCore,
    ) -> Result<CipherVector, CipherError> {
        let negated = self.encrypt_vector(&r.scale(-1.0), rng)?;
        self.add_cipher(a, &negated)
    }
}

/// Private (decryption) side of an additively homomorphic cipher.
pub trait Decryptor: Send + Sync {
    fn key_id(&self) -> &str;

    fn scheme(&self) -> SchemeTag;

    fn codec(&self) -> &FixedPointCodec;

    /// Plaintext of one element before reduction into the fixed-point ring.
    fn decrypt_element(&self, c: &BigUint) -> Result<BigUint, CipherError>;

    fn decrypt_vector(&self, c: &CipherVector) -> Result<ParamVector, CipherError> {
        if c.scheme != self.scheme() {
            return Err(CipherError::SchemeMismatch {
                left: c.scheme,
                right: self.scheme(),
            });
        }
        if c.key_id != self.key_id() {
            return Err(CipherError::Decrypt(
                "ciphertext was not produced under this key".into(),
            ));
        }
        let codec = *self.codec();
        let mask = BigUint::from(codec.modulus() - 1);
        let encoded = c
            .elements
            .iter()
            .map(|e| {
                let m = self.decrypt_element(e)? & &mask;
                Ok(m.iter_u64_digits()
                    .rev()
                    .fold(0u128, |acc, d| (acc << 64) | d as u128))
            })
            .collect::<Result<Vec<u128>, CipherError>>()?;
        Ok(codec.decode_vector(&encoded))
    }
}

/// Identity cipher: elements are fixed-point encodings and addition is
/// modular addition in the plaintext ring. Exposes every plaintext.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NullCipher {
    codec: FixedPointCodec,
}

impl NullCipher {
    pub fn new(codec: FixedPointCodec) -> Self {
        Self { codec }
    }
}

impl AdditiveCipher for NullCipher {
    fn scheme(&self) -> SchemeTag {
        SchemeTag::Null
    }

    fn key_id(&self) -> &str {
        "null"
    }

    fn codec(&self) -> &FixedPointCodec {
        &self.codec
    }

    fn plaintext_capacity_bits(&self) -> u64 {
        self.codec.plaintext_modulus_bits() as u64
    }

    fn encrypt_element(
        &self,
        encoded: u128,
        _rng: &mut dyn RngCore,
    ) -> Result<BigUint, CipherError> {
        Ok(BigUint::from(encoded))
    }

    fn add_elements(&self, a: &BigUint, b: &BigUint) -> BigUint {
        (a + b) % BigUint::from(self.codec.modulus())
    }

    fn element_in_range(&self, c: &BigUint) -> bool {
        c < &BigUint::from(self.codec.modulus())
    }
}

impl Decryptor for NullCipher {
    fn key_id(&self) -> &str {
        "null"
    }

    fn scheme(&self) -> SchemeTag {
        SchemeTag::Null
    }

    fn codec(&self) -> &FixedPointCodec {
        &self.codec
    }

    fn decrypt_element(&self, c: &BigUint) -> Result<BigUint, CipherError> {
        Ok(c.clone())
    }
}

/// The cipher used for one experiment: the public side handed to every user
/// and the private side handed to the round's initiator.
#[derive(Debug, Clone)]
pub enum CipherSuite {
    Null(NullCipher),
    Paillier(AheKeyPair),
}

impl CipherSuite {
    pub fn public(&self) -> &dyn AdditiveCipher {
        match self {
            CipherSuite::Null(c) => c,
            CipherSuite::Paillier(keys) => &keys.public,
        }
    }

    pub fn private(&self) -> &dyn Decryptor {
        match self {
            CipherSuite::Null(c) => c,
            CipherSuite::Paillier(keys) => &keys.private,
        }
    }

    pub fn scheme(&self) -> SchemeTag {
        self.public().scheme()
    }

    pub fn codec(&self) -> &FixedPointCodec {
        self.public().codec()
    }
}
