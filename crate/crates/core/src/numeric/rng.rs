use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use super::{NumericError, ParamVector};

/// Deterministic random stream keyed by an experiment seed and a purpose label.
///
/// The ChaCha20 key is `SHA-256(seed_le || label)`, so every
/// `(seed, stream_id)` pair yields the same draws on every platform and the
/// streams of different labels are independent. A stream is owned by exactly
/// one node and advanced only by it.
#[derive(Debug, Clone)]
pub struct SeededRng {
    stream_id: String,
    inner: ChaCha20Rng,
}

impl SeededRng {
    pub fn new(seed: u64, stream_id: impl Into<String>) -> Self {
        let stream_id = stream_id.into();
        let mut hasher = Sha256::new();
        hasher.update(seed.to_le_bytes());
        hasher.update(stream_id.as_bytes());
        let digest = hasher.finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest);
        Self {
            stream_id,
            inner: ChaCha20Rng::from_seed(key),
        }
    }

    pub fn stream_id(&self) -> &str {
        &self.stream_id
    }

    /// Child stream labelled `"{parent}/{label}"`, derived from the same seed
    /// material but independent of this stream's position.
    pub fn derive(seed: u64, parent: &str, label: &str) -> Self {
        Self::new(seed, format!("{parent}/{label}"))
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }
}

/// `dim` i.i.d. draws from `N(mean, sigma^2)`.
pub fn gaussian_vector<R: RngCore + ?Sized>(
    dim: usize,
    mean: f64,
    sigma: f64,
    rng: &mut R,
) -> Result<ParamVector, NumericError> {
    if dim == 0 {
        return Err(NumericError::Argument(
            "dimension must be at least 1".into(),
        ));
    }
    if !(sigma > 0.0) || !sigma.is_finite() || !mean.is_finite() {
        return Err(NumericError::Argument(format!(
            "gaussian parameters must be finite with sigma > 0 (mean {mean}, sigma {sigma})"
        )));
    }
    let normal = Normal::new(mean, sigma)
        .map_err(|e| NumericError::Argument(format!("invalid normal distribution: {e}")))?;
    let values = (0..dim).map(|_| normal.sample(rng)).collect();
    ParamVector::new(values)
}
