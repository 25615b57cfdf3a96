use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AdversaryError, AttackTarget, Provenance};
use crate::csahe::{Decryptor, SchemeTag};
use crate::engine::{ExperimentConfig, RoundTransport};
use crate::model::ModelSpec;
use crate::numeric::ParamVector;

/// Public training parameters the attacker uses to turn a model update into
/// a gradient estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackContext {
    pub spec: ModelSpec,
    pub learning_rate: f64,
    pub local_steps: usize,
    pub users: usize,
}

impl AttackContext {
    pub fn from_config(config: &ExperimentConfig) -> Self {
        Self {
            spec: config.model.clone(),
            learning_rate: config.beta,
            local_steps: config.local_epochs,
            users: config.users,
        }
    }

    /// `−Δ / (β τ k)`: exact for one SGD step on one sample (`k = 1`).
    fn gradient_estimate(&self, update: &ParamVector, contributors: usize) -> ParamVector {
        update.scale(-1.0 / (self.learning_rate * self.local_steps as f64 * contributors as f64))
    }

    fn target(
        &self,
        update: &ParamVector,
        contributors: usize,
        provenance: Provenance,
        server: &ParamVector,
    ) -> Result<AttackTarget, AdversaryError> {
        let mut target = AttackTarget::new(
            self.gradient_estimate(update, contributors),
            provenance,
            self.spec.clone(),
            server.clone(),
        )?;
        target.raw_update = update.clone();
        Ok(target)
    }
}

/// What a link interceptor holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Observation {
    Plaintext(AttackTarget),
    CiphertextOnly {
        hop: usize,
        sender: usize,
        receiver: usize,
        scheme: SchemeTag,
        dim: usize,
        payload_bytes: usize,
    },
}

impl Observation {
    pub fn plaintext_available(&self) -> bool {
        matches!(self, Observation::Plaintext(_))
    }

    /// The plaintext attack target; ciphertext-only observations have none.
    pub fn target(&self) -> Result<&AttackTarget, AdversaryError> {
        match self {
            Observation::Plaintext(t) => Ok(t),
            Observation::CiphertextOnly { .. } => Err(AdversaryError::CiphertextOnly),
        }
    }
}

/// Type I view: the message on link `index` of one round.
///
/// FedAvg links carry plaintext updates (`index` is the uploading user);
/// ring links carry ciphertexts (`index` is the hop).
pub fn intercept(
    round: &RoundTransport,
    index: usize,
    ctx: &AttackContext,
) -> Result<Observation, AdversaryError> {
    match round {
        RoundTransport::Fedavg {
            server_model,
            uploads,
            ..
        } => {
            let update = uploads.get(index).ok_or(AdversaryError::Index {
                index,
                len: uploads.len(),
            })?;
            Ok(Observation::Plaintext(ctx.target(
                update,
                1,
                Provenance::FedavgUserUpload,
                server_model,
            )?))
        }
        RoundTransport::Csahe { ring, .. } => {
            let message = ring.trace.get(index).ok_or(AdversaryError::Index {
                index,
                len: ring.trace.len(),
            })?;
            Ok(Observation::CiphertextOnly {
                hop: message.hop,
                sender: message.sender,
                receiver: message.receiver,
                scheme: message.payload.scheme(),
                dim: message.payload.dim(),
                payload_bytes: message.payload.to_bytes().len(),
            })
        }
    }
}

/// Type II view: the receiver of hop `hop` decrypts it with a leaked key.
/// The plaintext is the initiator's masked update plus the updates added so
/// far.
pub fn hbc_view(
    round: &RoundTransport,
    hop: usize,
    leaked_key: &dyn Decryptor,
    ctx: &AttackContext,
) -> Result<AttackTarget, AdversaryError> {
    let RoundTransport::Csahe {
        ring, server_model, ..
    } = round
    else {
        return Err(AdversaryError::Argument("round has no ring trace".into()));
    };
    let message = ring.trace.get(hop).ok_or(AdversaryError::Index {
        index: hop,
        len: ring.trace.len(),
    })?;
    let plain = leaked_key
        .decrypt_vector(&message.payload)
        .map_err(|e| AdversaryError::Decrypt(e.to_string()))?;
    ctx.target(
        &plain,
        1,
        Provenance::CsaheIntermediateDecrypted,
        server_model,
    )
}

/// The decrypted sum the initiator reports to the server.
pub fn aggregate_view(
    round: &RoundTransport,
    ctx: &AttackContext,
) -> Result<AttackTarget, AdversaryError> {
    let RoundTransport::Csahe {
        aggregate,
        server_model,
        ring,
        ..
    } = round
    else {
        return Err(AdversaryError::Argument(
            "round has no ring aggregate".into(),
        ));
    };
    ctx.target(
        aggregate,
        ring.users(),
        Provenance::CsaheFinalAggregate,
        server_model,
    )
}

/// Writes `data` as a binary PGM image, min-max scaled to 0..255. The length
/// must be a perfect square.
pub fn write_pgm(path: impl AsRef<Path>, data: &[f64]) -> Result<(), AdversaryError> {
    let side = (data.len() as f64).sqrt().round() as usize;
    if side == 0 || side * side != data.len() {
        return Err(AdversaryError::Argument(format!(
            "{} values do not form a square image",
            data.len()
        )));
    }
    let lo = data.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut bytes = format!("P5\n{side} {side}\n255\n").into_bytes();
    bytes.extend(
        data.iter()
            .map(|v| (((v - lo) / span) * 255.0).round().clamp(0.0, 255.0) as u8),
    );
    let io =
        |e: std::io::Error| AdversaryError::Argument(format!("{}: {e}", path.as_ref().display()));
    let mut file = std::fs::File::create(path.as_ref()).map_err(io)?;
    file.write_all(&bytes).map_err(io)
}
