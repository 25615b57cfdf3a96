use serde::{Deserialize, Serialize};

use super::EngineError;
use crate::csahe::{MaskPolicy, MIN_MASK_SIGMA, SUPPORTED_KEY_BITS};
use crate::model::{HvpBackend, ModelSpec};
use crate::numeric::FixedPointCodec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// Per-FedAvg local steps, ring aggregation, final adaptation.
    Pppml,
    Fedavg,
    LocalOnly,
    Centralized,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::Centralized,
        Algorithm::LocalOnly,
        Algorithm::Fedavg,
        Algorithm::Pppml,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Pppml => "pppml",
            Algorithm::Fedavg => "fedavg",
            Algorithm::LocalOnly => "local-only",
            Algorithm::Centralized => "centralized",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                format!(
                    "unknown algorithm {s:?} (expected pppml, fedavg, local-only or centralized)"
                )
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CipherKind {
    Null,
    Paillier,
}

impl std::str::FromStr for CipherKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "null" => Ok(CipherKind::Null),
            "paillier" => Ok(CipherKind::Paillier),
            _ => Err(format!("unknown cipher {s:?} (expected null or paillier)")),
        }
    }
}

/// Everything that determines a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub model: ModelSpec,
    /// K
    pub global_epochs: usize,
    /// τ
    pub local_epochs: usize,
    /// γ
    pub adapt_epochs: usize,
    pub alpha: f64,
    pub beta: f64,
    pub users: usize,
    pub batch_size: usize,
    pub cipher: CipherKind,
    pub mask_sigma: MaskPolicy,
    pub paillier_bits: u32,
    pub codec: FixedPointCodec,
    pub hvp_backend: HvpBackend,
    /// Also adapt the final model of non-pppml algorithms.
    pub adapt_baselines: bool,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn new(algorithm: Algorithm, model: ModelSpec, users: usize) -> Self {
        Self {
            algorithm,
            model,
            global_epochs: 20,
            local_epochs: 10,
            adapt_epochs: 5,
            alpha: 0.01,
            beta: 1e-4,
            users,
            batch_size: 64,
            cipher: CipherKind::Paillier,
            mask_sigma: MaskPolicy::Auto,
            paillier_bits: 1024,
            codec: FixedPointCodec::default(),
            hvp_backend: HvpBackend::FiniteDifference,
            adapt_baselines: false,
            seed: 0,
        }
    }

    /// Whether the run ends with per-user adaptation.
    pub fn adapts(&self) -> bool {
        self.algorithm == Algorithm::Pppml || self.adapt_baselines
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let fail = |m: String| Err(EngineError::Config(m));
        self.model
            .validate()
            .map_err(|e| EngineError::Config(e.to_string()))?;
        for (name, v) in [
            ("global_epochs", self.global_epochs),
            ("local_epochs", self.local_epochs),
            ("adapt_epochs", self.adapt_epochs),
            ("users", self.users),
            ("batch_size", self.batch_size),
        ] {
            if v == 0 {
                return fail(format!("{name} must be at least 1"));
            }
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return fail(format!("alpha must be finite and >= 0, got {}", self.alpha));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return fail(format!("beta must be finite and > 0, got {}", self.beta));
        }
        if let MaskPolicy::Fixed(sigma) = self.mask_sigma {
            if !(sigma > MIN_MASK_SIGMA && sigma.is_finite()) {
                return fail(format!(
                    "mask_sigma must exceed {MIN_MASK_SIGMA}, got {sigma}"
                ));
            }
        }
        if !SUPPORTED_KEY_BITS.contains(&self.paillier_bits) {
            return fail(format!(
                "paillier_bits must be one of {SUPPORTED_KEY_BITS:?}, got {}",
                self.paillier_bits
            ));
        }
        if self.hvp_backend == HvpBackend::Exact && !self.model.has_exact_hessian() {
            return fail(
                "the exact Hessian backend supports only linear and logistic regression".into(),
            );
        }
        if self.algorithm == Algorithm::Pppml && self.users < 3 {
            return Err(EngineError::Protocol { users: self.users });
        }
        Ok(())
    }
}
