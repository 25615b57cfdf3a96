//! Training orchestration: Per-FedAvg and FedAvg local updates, local-only
//! and centralized baselines, server aggregation and final adaptation.

mod config;
mod local;
mod run;

pub use config::{Algorithm, CipherKind, ExperimentConfig};
pub use local::{
    adapt, draw_step_batches, fedavg_local_update, perfedavg_local_update, server_aggregate,
    PerFedAvgParams, StepBatches,
};
pub use run::{
    accuracy_on, run_training, EpochRecord, Evaluation, RoundTransport, TrainingHistory,
    TrainingRun, TransportLog, UserResult,
};

use thiserror::Error;

use crate::csahe::{CipherError, CsaheError};
use crate::model::ModelError;
use crate::numeric::NumericError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    Config(String),

    /// The ring needs three users: with two, the initiator learns the other
    /// user's update by subtracting its own from the sum.
    #[error("secure aggregation requires N >= 3 users (with N = 2 each user can recover the other's update); got N = {users}")]
    Protocol { users: usize },

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error(transparent)]
    Model(#[from] ModelError),

    #[error(transparent)]
    Numeric(#[from] NumericError),

    #[error(transparent)]
    Csahe(#[from] CsaheError),
}

impl From<CipherError> for EngineError {
    fn from(e: CipherError) -> Self {
        EngineError::Csahe(CsaheError::Cipher(e))
    }
}
