//! Gradient-inversion attacks and the two attacker vantage points.
//!
//! A type I attacker intercepts messages on a link: plaintext updates under
//! FedAvg, ciphertexts under the ring protocol. A type II attacker is an
//! honest-but-curious ring member who also holds a leaked private key and so
//! sees the masked partial sums.

mod idlg;
mod views;

pub use idlg::{
    extract_label, gradient_loss, idlg_attack, idlg_attack_from, AttackOptions, AttackResult,
    Snapshot,
};
pub use views::{aggregate_view, hbc_view, intercept, write_pgm, AttackContext, Observation};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelError, ModelSpec};
use crate::numeric::ParamVector;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdversaryError {
    #[error("label is ambiguous: {0}")]
    Ambiguity(String),

    /// The observation carries only ciphertext; there is no plaintext
    /// gradient to invert.
    #[error("ciphertext-only observation: no plaintext gradient is available")]
    CiphertextOnly,

    #[error("index {index} out of range (length {len})")]
    Index { index: usize, len: usize },

    #[error("decryption failed: {0}")]
    Decrypt(String),

    #[error("attack diverged: {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Where an attacked gradient came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    FedavgUserUpload,
    CsaheIntermediateDecrypted,
    CsaheFinalAggregate,
}

/// A plaintext gradient in the attacker's hands, plus the public context
/// needed to invert it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackTarget {
    /// Gradient estimate at `server_weights`.
    pub observed_gradient: ParamVector,
    /// The raw message the estimate was derived from.
    pub raw_update: ParamVector,
    pub provenance: Provenance,
    pub model_spec: ModelSpec,
    pub server_weights: ParamVector,
    /// True samples used only to score the reconstruction.
    #[serde(default)]
    pub candidates: Vec<Vec<f64>>,
}

impl AttackTarget {
    pub fn new(
        observed_gradient: ParamVector,
        provenance: Provenance,
        model_spec: ModelSpec,
        server_weights: ParamVector,
    ) -> Result<Self, AdversaryError> {
        model_spec.check_params(&observed_gradient)?;
        model_spec.check_params(&server_weights)?;
        Ok(Self {
            raw_update: observed_gradient.clone(),
            observed_gradient,
            provenance,
            model_spec,
            server_weights,
            candidates: Vec::new(),
        })
    }

    pub fn with_candidates(mut self, candidates: Vec<Vec<f64>>) -> Self {
        self.candidates = candidates;
        self
    }

    /// Smallest mean squared error between `x` and any candidate sample.
    pub fn best_mse(&self, x: &[f64]) -> Option<f64> {
        self.candidates
            .iter()
            .filter(|c| c.len() == x.len())
            .map(|c| c.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / x.len() as f64)
            .min_by(f64::total_cmp)
    }
}
