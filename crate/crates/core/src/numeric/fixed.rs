use serde::{Deserialize, Serialize};

use super::{NumericError, ParamVector};

/// Signed fixed-point encoding of reals into the integer ring `Z_M`,
/// `M = 2^plaintext_modulus_bits`.
///
/// Values in the upper half of the ring (`n >= M/2`) denote negatives, which
/// makes encoding additively homomorphic modulo `M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedPointCodec {
    scale_bits: u32,
    plaintext_modulus_bits: u32,
}

impl Default for FixedPointCodec {
    /// 32 fractional bits in a 64-bit ring: 2^20 summands of magnitude
    /// up to 2^10 stay below `M/2`.
    fn default() -> Self {
        Self {
            scale_bits: 32,
            plaintext_modulus_bits: 64,
        }
    }
}

impl FixedPointCodec {
    pub const MAX_MODULUS_BITS: u32 = 126;

    pub fn new(scale_bits: u32, plaintext_modulus_bits: u32) -> Result<Self, NumericError> {
        if plaintext_modulus_bits > Self::MAX_MODULUS_BITS {
            return Err(NumericError::Argument(format!(
                "plaintext modulus of {plaintext_modulus_bits} bits exceeds {} bits",
                Self::MAX_MODULUS_BITS
            )));
        }
        if plaintext_modulus_bits < scale_bits + 2 {
            return Err(NumericError::Argument(format!(
                "plaintext modulus of {plaintext_modulus_bits} bits leaves no integer headroom \
                 above {scale_bits} fractional bits"
            )));
        }
        Ok(Self {
            scale_bits,
            plaintext_modulus_bits,
        })
    }

    pub fn scale_bits(&self) -> u32 {
        self.scale_bits
    }

    pub fn plaintext_modulus_bits(&self) -> u32 {
        self.plaintext_modulus_bits
    }

    pub fn modulus(&self) -> u128 {
        1u128 << self.plaintext_modulus_bits
    }

    fn half_modulus(&self) -> u128 {
        1u128 << (self.plaintext_modulus_bits - 1)
    }

    /// Quantization step `2^-scale_bits`.
    pub fn resolution(&self) -> f64 {
        (-(self.scale_bits as f64)).exp2()
    }

    /// Largest magnitude that encodes without overflow.
    pub fn max_magnitude(&self) -> f64 {
        ((self.plaintext_modulus_bits - 1 - self.scale_bits) as f64).exp2()
    }

    pub fn encode(&self, x: f64) -> Result<u128, NumericError> {
        if !x.is_finite() {
            return Err(NumericError::Overflow { value: x });
        }
        // f64::round rounds half away from zero.
        let scaled = (x * (self.scale_bits as f64).exp2()).round();
        let limit = ((self.plaintext_modulus_bits - 1) as f64).exp2();
        if scaled.abs() >= limit {
            return Err(NumericError::Overflow { value: x });
        }
        let signed = scaled as i128;
        Ok(if signed < 0 {
            (self.modulus() as i128 + signed) as u128
        } else {
            signed as u128
        })
    }

    /// Decodes `n`, reduced modulo `M` first.
    pub fn decode(&self, n: u128) -> f64 {
        let n = n & (self.modulus() - 1);
        let signed = if n >= self.half_modulus() {
            n as i128 - self.modulus() as i128
        } else {
            n as i128
        };
        signed as f64 * self.resolution()
    }

    pub fn add_mod(&self, a: u128, b: u128) -> u128 {
        a.wrapping_add(b) & (self.modulus() - 1)
    }

    pub fn neg_mod(&self, a: u128) -> u128 {
        (self.modulus() - (a & (self.modulus() - 1))) & (self.modulus() - 1)
    }

    pub fn encode_vector(&self, v: &ParamVector) -> Result<Vec<u128>, NumericError> {
        v.iter().map(|&x| self.encode(x)).collect()
    }

    pub fn decode_vector(&self, encoded: &[u128]) -> ParamVector {
        ParamVector::from_vec_unchecked(encoded.iter().map(|&n| self.decode(n)).collect())
    }

    /// Rejects sums of `summands` values bounded by `max_abs` that could wrap
    /// past `M/2`: requires `summands * max_abs * 2^scale_bits < 2^(bits-1)`.
    pub fn check_sum_headroom(&self, summands: usize, max_abs: f64) -> Result<(), NumericError> {
        let bound = summands as f64 * max_abs * (self.scale_bits as f64).exp2();
        let limit = ((self.plaintext_modulus_bits - 1) as f64).exp2();
        if !(bound < limit) {
            return Err(NumericError::Headroom {
                summands,
                max_abs,
                modulus_bits: self.plaintext_modulus_bits,
            });
        }
        Ok(())
    }

    /// Exact, order-independent sum computed in the encoded ring.
    ///
    /// The result equals `decode(sum(encode(v_i)) mod M)`, so it does not depend
    /// on the order in which the inputs are accumulated.
    pub fn exact_sum(&self, vectors: &[ParamVector]) -> Result<ParamVector, NumericError> {
        let first = vectors.first().ok_or(NumericError::Empty)?;
        let dim = first.dim();
        let max_abs = vectors.iter().map(|v| v.norm_inf()).fold(0.0, f64::max);
        self.check_sum_headroom(vectors.len(), max_abs)?;
        let mut acc = vec![0u128; dim];
        for v in vectors {
            if v.dim() != dim {
                return Err(NumericError::Dimension {
                    expected: dim,
                    actual: v.dim(),
                });
            }
            for (a, x) in acc.iter_mut().zip(v.iter()) {
                *a = self.add_mod(*a, self.encode(*x)?);
            }
        }
        Ok(self.decode_vector(&acc))
    }
}
