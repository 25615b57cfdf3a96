//! Paillier cryptosystem with `g = n + 1`.
//!
//! Encryption randomness uses the Damgård–Jurik–Nielsen form `h_s^a mod n²`
//! with `h_s = (-x²)^n` and a short exponent `a` of `|n|/2` bits, evaluated
//! with a fixed-base window table. Decryption uses the CRT over `p²` and `q²`.

use std::sync::{Arc, OnceLock};

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::cipher::{AdditiveCipher, CipherError, Decryptor, SchemeTag};
use crate::numeric::FixedPointCodec;

pub const SUPPORTED_KEY_BITS: [u32; 3] = [1024, 2048, 3072];

const WINDOW_BITS: usize = 6;
const MILLER_RABIN_ROUNDS: usize = 40;

const SMALL_PRIMES: [u32; 54] = [
    3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97,
    101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191, 193,
    197, 199, 211, 223, 227, 229, 233, 239, 241, 251, 257,
];

/// Uniform integer with exactly `bits` random bits (the top bit may be zero).
pub(crate) fn random_bits(bits: u64, rng: &mut dyn RngCore) -> BigUint {
    let bytes = bits.div_ceil(8) as usize;
    let mut buf = vec![0u8; bytes];
    rng.fill_bytes(&mut buf);
    let excess = bytes as u64 * 8 - bits;
    if excess > 0 {
        buf[0] &= 0xff >> excess;
    }
    BigUint::from_bytes_be(&buf)
}

/// Uniform integer in `[1, bound)`.
fn random_below(bound: &BigUint, rng: &mut dyn RngCore) -> BigUint {
    loop {
        let candidate = random_bits(bound.bits(), rng);
        if !candidate.is_zero() && &candidate < bound {
            return candidate;
        }
    }
}

fn is_probable_prime(n: &BigUint, rng: &mut dyn RngCore) -> bool {
    let two = BigUint::from(2u32);
    if n < &two {
        return false;
    }
    if n == &two {
        return true;
    }
    if n.is_even() {
        return false;
    }
    for &p in SMALL_PRIMES.iter() {
        let p = BigUint::from(p);
        if n == &p {
            return true;
        }
        if (n % &p).is_zero() {
            return false;
        }
    }
    let n_minus_one = n - 1u32;
    let s = n_minus_one.trailing_zeros().unwrap_or(0);
    let d = &n_minus_one >> s;
    let three = BigUint::from(3u32);
    'witness: for _ in 0..MILLER_RABIN_ROUNDS {
        // Witness in [2, n-2].
        let a = random_below(&(n - &three), rng) + 1u32;
        let mut x = a.modpow(&d, n);
        if x.is_one() || x == n_minus_one {
            continue;
        }
        for _ in 1..s {
            x = x.modpow(&two, n);
            if x == n_minus_one {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

fn random_prime(bits: u64, rng: &mut dyn RngCore) -> BigUint {
    loop {
        let mut candidate = random_bits(bits, rng);
        candidate.set_bit(bits - 1, true);
        candidate.set_bit(bits - 2, true);
        candidate.set_bit(0, true);
        if is_probable_prime(&candidate, rng) {
            return candidate;
        }
    }
}

fn key_id_of(n: &BigUint) -> String {
    let digest = Sha256::digest(n.to_bytes_be());
    hex::encode(&digest[..8])
}

/// Precomputed powers `h_s^(v · 2^(6j))` for fixed-base exponentiation.
#[derive(Debug)]
struct FixedBaseTable {
    windows: Vec<Vec<BigUint>>,
}

impl FixedBaseTable {
    fn build(base: &BigUint, modulus: &BigUint, exponent_bits: usize) -> Self {
        let count = exponent_bits.div_ceil(WINDOW_BITS);
        let width = 1usize << WINDOW_BITS;
        let mut windows = Vec::with_capacity(count);
        let mut window_base = base.clone();
        for _ in 0..count {
            let mut row = Vec::with_capacity(width);
            row.push(BigUint::one());
            for v in 1..width {
                row.push((&row[v - 1] * &window_base) % modulus);
            }
            window_base = (&row[width - 1] * &window_base) % modulus;
            windows.push(row);
        }
        Self { windows }
    }

    fn pow(&self, exponent: &BigUint, modulus: &BigUint) -> BigUint {
        let mut acc = BigUint::one();
        let mask = (1u64 << WINDOW_BITS) - 1;
        for (j, row) in self.windows.iter().enumerate() {
            let mut digit = 0u64;
            for b in 0..WINDOW_BITS as u64 {
                if exponent.bit(j as u64 * WINDOW_BITS as u64 + b) {
                    digit |= 1 << b;
                }
            }
            let digit = (digit & mask) as usize;
            if digit != 0 {
                acc = (acc * &row[digit]) % modulus;
            }
        }
        acc
    }
}

#[derive(Serialize, Deserialize)]
struct PublicKeyRepr {
    n: String,
    h_s: String,
    codec: FixedPointCodec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "PublicKeyRepr", into = "PublicKeyRepr")]
pub struct PaillierPublicKey {
    n: BigUint,
    n_squared: BigUint,
    h_s: BigUint,
    codec: FixedPointCodec,
    key_id: String,
    table: Arc<OnceLock<FixedBaseTable>>,
}

impl TryFrom<PublicKeyRepr> for PaillierPublicKey {
    type Error = CipherError;

    fn try_from(repr: PublicKeyRepr) -> Result<Self, CipherError> {
        let parse = |s: &str| {
            BigUint::parse_bytes(s.as_bytes(), 16)
                .ok_or_else(|| CipherError::Malformed(format!("bad hex integer {s:.16}...")))
        };
        Ok(Self::from_parts(
            parse(&repr.n)?,
            parse(&repr.h_s)?,
            repr.codec,
        ))
    }
}

impl From<PaillierPublicKey> for PublicKeyRepr {
    fn from(pk: PaillierPublicKey) -> Self {
        Self {
            n: pk.n.to_str_radix(16),
            h_s: pk.h_s.to_str_radix(16),
            codec: pk.codec,
        }
    }
}

impl PaillierPublicKey {
    fn from_parts(n: BigUint, h_s: BigUint, codec: FixedPointCodec) -> Self {
        Self {
            n_squared: &n * &n,
            key_id: key_id_of(&n),
            n,
            h_s,
            codec,
            table: Arc::new(OnceLock::new()),
        }
    }

    pub fn modulus(&self) -> &BigUint {
        &self.n
    }

    pub fn modulus_bits(&self) -> u64 {
        self.n.bits()
    }

    fn exponent_bits(&self) -> usize {
        (self.n.bits() as usize).div_ceil(2)
    }

    fn table(&self) -> &FixedBaseTable {
        self.table
            .get_or_init(|| FixedBaseTable::build(&self.h_s, &self.n_squared, self.exponent_bits()))
    }

    /// Encrypts an arbitrary plaintext `m < n`.
    pub fn encrypt_raw(&self, m: &BigUint, rng: &mut dyn RngCore) -> Result<BigUint, CipherError> {
        if m >= &self.n {
            return Err(CipherError::PlaintextRange);
        }
        let a = random_bits(self.exponent_bits() as u64, rng);
        let noise = self.table().pow(&a, &self.n_squared);
        // (n + 1)^m = 1 + m·n (mod n²)
        let gm = (BigUint::one() + m * &self.n) % &self.n_squared;
        Ok((gm * noise) % &self.n_squared)
    }

    /// Homomorphic addition of two raw ciphertexts.
    pub fn add_raw(&self, a: &BigUint, b: &BigUint) -> BigUint {
        (a * b) % &self.n_squared
    }
}

impl AdditiveCipher for PaillierPublicKey {
    fn scheme(&self) -> SchemeTag {
        SchemeTag::Paillier
    }

    fn key_id(&self) -> &str {
        &self.key_id
    }

    fn codec(&self) -> &FixedPointCodec {
        &self.codec
    }

    fn plaintext_capacity_bits(&self) -> u64 {
        self.n.bits() - 1
    }

    fn encrypt_element(
        &self,
        encoded: u128,
        rng: &mut dyn RngCore,
    ) -> Result<BigUint, CipherError> {
        self.encrypt_raw(&BigUint::from(encoded), rng)
    }

    fn add_elements(&self, a: &BigUint, b: &BigUint) -> BigUint {
        self.add_raw(a, b)
    }

    fn element_in_range(&self, c: &BigUint) -> bool {
        !c.is_zero() && c < &self.n_squared
    }
}

#[derive(Serialize, Deserialize)]
struct PrivateKeyRepr {
    public: PaillierPublicKey,
    p: String,
    q: String,
}

/// Decryption key. Holds the factorization of `n`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "PrivateKeyRepr", into = "PrivateKeyRepr")]
pub struct PaillierPrivateKey {
    public: PaillierPublicKey,
    p: BigUint,
    q: BigUint,
    p_squared: BigUint,
    q_squared: BigUint,
    hp: BigUint,
    hq: BigUint,
    p_inv_mod_q: BigUint,
}

impl TryFrom<PrivateKeyRepr> for PaillierPrivateKey {
    type Error = CipherError;

    fn try_from(repr: PrivateKeyRepr) -> Result<Self, CipherError> {
        let parse = |s: &str| {
            BigUint::parse_bytes(s.as_bytes(), 16)
                .ok_or_else(|| CipherError::Malformed("bad hex prime".into()))
        };
        let (p, q) = (parse(&repr.p)?, parse(&repr.q)?);
        if &p * &q != repr.public.n {
            return Err(CipherError::Malformed(
                "primes do not match the modulus".into(),
            ));
        }
        Self::from_primes(repr.public, p, q)
    }
}

impl From<PaillierPrivateKey> for PrivateKeyRepr {
    fn from(sk: PaillierPrivateKey) -> Self {
        Self {
            p: sk.p.to_str_radix(16),
            q: sk.q.to_str_radix(16),
            public: sk.public,
        }
    }
}

impl PaillierPrivateKey {
    fn from_primes(public: PaillierPublicKey, p: BigUint, q: BigUint) -> Result<Self, CipherError> {
        let p_squared = &p * &p;
        let q_squared = &q * &q;
        let g = &public.n + 1u32;
        let h = |prime: &BigUint, prime_sq: &BigUint| -> Result<BigUint, CipherError> {
            let l = (g.modpow(&(prime - 1u32), prime_sq) - 1u32) / prime;
            l.modinv(prime)
                .ok_or_else(|| CipherError::Malformed("degenerate prime".into()))
        };
        let hp = h(&p, &p_squared)?;
        let hq = h(&q, &q_squared)?;
        let p_inv_mod_q = p
            .modinv(&q)
            .ok_or_else(|| CipherError::Malformed("p not invertible mod q".into()))?;
        Ok(Self {
            public,
            p,
            q,
            p_squared,
            q_squared,
            hp,
            hq,
            p_inv_mod_q,
        })
    }

    pub fn public(&self) -> &PaillierPublicKey {
        &self.public
    }

    /// Recovers the plaintext in `[0, n)` of a raw ciphertext.
    pub fn decrypt_raw(&self, c: &BigUint) -> Result<BigUint, CipherError> {
        if !self.public.element_in_range(c) {
            return Err(CipherError::Decrypt("ciphertext outside Z_{n^2}".into()));
        }
        let part = |prime: &BigUint, prime_sq: &BigUint, h: &BigUint| {
            let u = c.modpow(&(prime - 1u32), prime_sq);
            (((u - 1u32) / prime) * h) % prime
        };
        let mp = part(&self.p, &self.p_squared, &self.hp);
        let mq = part(&self.q, &self.q_squared, &self.hq);
        // Garner recombination: m = mp + p · ((mq - mp) p⁻¹ mod q)
        let diff = (&mq + &self.q - (&mp % &self.q)) % &self.q;
        let t = (diff * &self.p_inv_mod_q) % &self.q;
        Ok(mp + &self.p * t)
    }
}

impl Decryptor for PaillierPrivateKey {
    fn key_id(&self) -> &str {
        &self.public.key_id
    }

    fn scheme(&self) -> SchemeTag {
        SchemeTag::Paillier
    }

    fn codec(&self) -> &FixedPointCodec {
        &self.public.codec
    }

    fn decrypt_element(&self, c: &BigUint) -> Result<BigUint, CipherError> {
        self.decrypt_raw(c)
    }
}

/// Matching Paillier public and private keys.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AheKeyPair {
    pub public: PaillierPublicKey,
    pub private: PaillierPrivateKey,
}

/// Generates a key pair with a `bits`-bit modulus from `rng`.
///
/// Identical generator states produce identical keys.
pub fn keygen(
    bits: u32,
    codec: FixedPointCodec,
    rng: &mut dyn RngCore,
) -> Result<AheKeyPair, CipherError> {
    if !SUPPORTED_KEY_BITS.contains(&bits) {
        return Err(CipherError::Argument(format!(
            "unsupported modulus size {bits}; expected one of {SUPPORTED_KEY_BITS:?}"
        )));
    }
    if codec.plaintext_modulus_bits() as u64 + 64 >= bits as u64 {
        return Err(CipherError::Argument(
            "fixed-point ring does not fit the Paillier plaintext space".into(),
        ));
    }
    let half = bits as u64 / 2;
    loop {
        let p = random_prime(half, rng);
        let q = random_prime(half, rng);
        if p == q {
            continue;
        }
        let n = &p * &q;
        if n.bits() != bits as u64 {
            continue;
        }
        let x = random_below(&n, rng);
        if !x.gcd(&n).is_one() {
            continue;
        }
        // h = -x² mod n, h_s = h^n mod n²
        let h = &n - (&x * &x) % &n;
        let n_squared = &n * &n;
        let h_s = h.modpow(&n, &n_squared);
        let public = PaillierPublicKey::from_parts(n, h_s, codec);
        let private = match PaillierPrivateKey::from_primes(public.clone(), p, q) {
            Ok(sk) => sk,
            Err(_) => continue,
        };
        return Ok(AheKeyPair { public, private });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::SeededRng;

    pub(crate) fn test_keys() -> AheKeyPair {
        keygen(
            1024,
            FixedPointCodec::default(),
            &mut SeededRng::new(1, "keygen"),
        )
        .unwrap()
    }

    #[test]
    fn primality() {
        let mut rng = SeededRng::new(0, "mr");
        for p in [2u32, 3, 5, 97, 257, 7919, 104729] {
            assert!(is_probable_prime(&BigUint::from(p), &mut rng), "{p}");
        }
        for c in [1u32, 4, 9, 561, 7917, 104730, 1105 * 1729] {
            assert!(!is_probable_prime(&BigUint::from(c), &mut rng), "{c}");
        }
        // 2^127 - 1 is a Mersenne prime; 2^128 + 1 is not prime.
        let m127 = (BigUint::one() << 127u32) - 1u32;
        assert!(is_probable_prime(&m127, &mut rng));
        assert!(!is_probable_prime(
            &((BigUint::one() << 128u32) + 1u32),
            &mut rng
        ));
    }

    #[test]
    fn round_trip_and_homomorphism() {
        let keys = test_keys();
        let mut rng = SeededRng::new(2, "enc");
        let c = keys
            .public
            .encrypt_raw(&BigUint::from(42u32), &mut rng)
            .unwrap();
        assert_eq!(keys.private.decrypt_raw(&c).unwrap(), BigUint::from(42u32));

        let a = keys
            .public
            .encrypt_raw(&BigUint::from(1000u32), &mut rng)
            .unwrap();
        let b = keys
            .public
            .encrypt_raw(&BigUint::from(234u32), &mut rng)
            .unwrap();
        let sum = keys.public.add_raw(&a, &b);
        assert_eq!(
            keys.private.decrypt_raw(&sum).unwrap(),
            BigUint::from(1234u32)
        );

        let big = keys.public.modulus() - 1u32;
        let c = keys.public.encrypt_raw(&big, &mut rng).unwrap();
        assert_eq!(keys.private.decrypt_raw(&c).unwrap(), big);
        assert!(keys
            .public
            .encrypt_raw(keys.public.modulus(), &mut rng)
            .is_err());
    }

    #[test]
    fn keygen_is_deterministic() {
        let a = test_keys();
        let b = test_keys();
        assert_eq!(a.public.modulus(), b.public.modulus());
        assert_eq!(a.public.modulus_bits(), 1024);
        let c = keygen(
            1024,
            FixedPointCodec::default(),
            &mut SeededRng::new(2, "keygen"),
        )
        .unwrap();
        assert_ne!(a.public.modulus(), c.public.modulus());
    }

    #[test]
    fn unsupported_sizes_rejected() {
        let mut rng = SeededRng::new(0, "k");
        assert!(matches!(
            keygen(100, FixedPointCodec::default(), &mut rng),
            Err(CipherError::Argument(_))
        ));
    }

    #[test]
    fn encryption_is_randomized() {
        let keys = test_keys();
        let mut rng = SeededRng::new(3, "enc");
        let m = BigUint::from(7u32);
        let c1 = keys.public.encrypt_raw(&m, &mut rng).unwrap();
        let c2 = keys.public.encrypt_raw(&m, &mut rng).unwrap();
        assert_ne!(c1, c2);
        assert_eq!(keys.private.decrypt_raw(&c2).unwrap(), m);
    }

    #[test]
    fn keys_serialize() {
        let keys = test_keys();
        let json = serde_json::to_string(&keys).unwrap();
        let back: AheKeyPair = serde_json::from_str(&json).unwrap();
        let mut rng = SeededRng::new(4, "enc");
        let c = keys
            .public
            .encrypt_raw(&BigUint::from(99u32), &mut rng)
            .unwrap();
        assert_eq!(back.private.decrypt_raw(&c).unwrap(), BigUint::from(99u32));
        assert_eq!(back.public.key_id, keys.public.key_id);
    }
}
