use rand::Rng;
use serde::{Deserialize, Serialize};

use super::cipher::{CipherSuite, CipherVector};
use super::CsaheError;
use crate::numeric::{gaussian_vector, ParamVector, SeededRng};

/// Masks must be drawn with a standard deviation above this value.
pub const MIN_MASK_SIGMA: f64 = 100.0;

/// Floor of the automatic mask standard deviation.
pub const AUTO_MASK_FLOOR: f64 = 150.0;

/// How the initiator's mask standard deviation is chosen each round.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode", content = "sigma")]
pub enum MaskPolicy {
    /// `max(150, 100 · max_i |g_i|_inf)`, recomputed per round.
    #[default]
    Auto,
    /// A fixed standard deviation, which must exceed [`MIN_MASK_SIGMA`].
    Fixed(f64),
}

impl MaskPolicy {
    pub fn sigma_for(&self, gradients: &[ParamVector]) -> f64 {
        match *self {
            MaskPolicy::Auto => {
                let max = gradients.iter().map(|g| g.norm_inf()).fold(0.0, f64::max);
                AUTO_MASK_FLOOR.max(100.0 * max)
            }
            MaskPolicy::Fixed(sigma) => sigma,
        }
    }
}

/// Gaussian mask added by the initiator to its own gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskVector {
    values: ParamVector,
    sigma: Option<f64>,
}

impl MaskVector {
    pub fn generate(dim: usize, sigma: f64, rng: &mut SeededRng) -> Result<Self, CsaheError> {
        if !(sigma > MIN_MASK_SIGMA) {
            return Err(CsaheError::WeakMask { sigma });
        }
        let values = gaussian_vector(dim, 0.0, sigma, rng)
            .map_err(|e| CsaheError::Argument(e.to_string()))?;
        Ok(Self {
            values,
            sigma: Some(sigma),
        })
    }

    /// A caller-chosen mask, bypassing the standard-deviation guard.
    pub fn explicit(values: ParamVector) -> Self {
        Self {
            values,
            sigma: None,
        }
    }

    pub fn values(&self) -> &ParamVector {
        &self.values
    }

    pub fn sigma(&self) -> Option<f64> {
        self.sigma
    }
}

/// One ring hop: `sender` passes the running encrypted sum to `receiver`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMessage {
    pub hop: usize,
    pub sender: usize,
    pub receiver: usize,
    pub payload: CipherVector,
}

/// Loop order, initiator and every message sent during one aggregation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingState {
    pub order: Vec<usize>,
    pub initiator: usize,
    pub trace: Vec<TraceMessage>,
}

impl RingState {
    pub fn users(&self) -> usize {
        self.order.len()
    }
}

/// Independent random streams used by one aggregation.
#[derive(Debug, Clone)]
pub struct RingRngs {
    pub initiator: SeededRng,
    pub mask: SeededRng,
    pub encrypt: SeededRng,
}

impl RingRngs {
    pub fn new(seed: u64) -> Self {
        Self {
            initiator: SeededRng::new(seed, "csahe/initiator"),
            mask: SeededRng::new(seed, "csahe/mask"),
            encrypt: SeededRng::new(seed, "csahe/encrypt"),
        }
    }
}

/// Securely sums `gradients` around a ring.
///
/// A uniformly chosen initiator masks its gradient with Gaussian noise and
/// encrypts it; each following user in ascending-id rotation adds the
/// encryption of its own gradient; the initiator removes the mask
/// homomorphically and decrypts. Returns the sum and the message trace.
pub fn ring_aggregate(
    gradients: &[ParamVector],
    suite: &CipherSuite,
    mask: MaskPolicy,
    rngs: &mut RingRngs,
) -> Result<(ParamVector, RingState), CsaheError> {
    check_inputs(gradients)?;
    let initiator = rngs.initiator.random_range(0..gradients.len());
    let sigma = mask.sigma_for(gradients);
    let mask = MaskVector::generate(gradients[0].dim(), sigma, &mut rngs.mask)?;
    run_ring(gradients, suite, initiator, &mask, &mut rngs.encrypt)
}

fn check_inputs(gradients: &[ParamVector]) -> Result<(), CsaheError> {
    if gradients.len() < 3 {
        return Err(CsaheError::TooFewUsers {
            users: gradients.len(),
        });
    }
    let dim = gradients[0].dim();
    if let Some(bad) = gradients.iter().find(|g| g.dim() != dim) {
        return Err(CsaheError::Dimension {
            expected: dim,
            actual: bad.dim(),
        });
    }
    Ok(())
}

/// Ring pass with a fixed initiator and mask.
pub fn run_ring(
    gradients: &[ParamVector],
    suite: &CipherSuite,
    initiator: usize,
    mask: &MaskVector,
    rng: &mut SeededRng,
) -> Result<(ParamVector, RingState), CsaheError> {
    check_inputs(gradients)?;
    let users = gradients.len();
    if initiator >= users {
        return Err(CsaheError::Argument(format!(
            "initiator {initiator} outside 0..{users}"
        )));
    }
    let dim = gradients[0].dim();
    if mask.values().dim() != dim {
        return Err(CsaheError::Dimension {
            expected: dim,
            actual: mask.values().dim(),
        });
    }

    let public = suite.public();
    let codec = *public.codec();
    let max_abs = gradients
        .iter()
        .map(|g| g.norm_inf())
        .fold(mask.values().norm_inf(), f64::max);
    codec.check_sum_headroom(users + 1, max_abs)?;
    let needed_bits = codec.plaintext_modulus_bits() as u64 + (users as u64 + 2).ilog2() as u64 + 1;
    if suite.scheme() != super::SchemeTag::Null && needed_bits > public.plaintext_capacity_bits() {
        return Err(CsaheError::Argument(
            "cipher plaintext space too small for this many summands".into(),
        ));
    }

    let order: Vec<usize> = (0..users).map(|k| (initiator + k) % users).collect();
    // Encode before adding so the mask cancels exactly in the ring.
    let masked: Vec<u128> = codec
        .encode_vector(&gradients[initiator])?
        .into_iter()
        .zip(codec.encode_vector(mask.values())?)
        .map(|(g, r)| codec.add_mod(g, r))
        .collect();
    let mut running = public.encrypt_encoded(&masked, rng)?;
    let mut trace = Vec::with_capacity(users);
    for hop in 0..users {
        let sender = order[hop];
        let receiver = order[(hop + 1) % users];
        if hop > 0 {
            let own = public.encrypt_vector(&gradients[sender], rng)?;
            running = public.add_cipher(&running, &own)?;
        }
        trace.push(TraceMessage {
            hop,
            sender,
            receiver,
            payload: running.clone(),
        });
    }

    // Back at the initiator, the only holder of the private key this round.
    let unmasked = public.sub_cipher(&running, mask.values(), rng)?;
    let total = suite.private().decrypt_vector(&unmasked)?;
    Ok((
        total,
        RingState {
            order,
            initiator,
            trace,
        },
    ))
}
