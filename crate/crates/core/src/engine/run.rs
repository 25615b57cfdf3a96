use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::local::{
    adapt, fedavg_local_update, perfedavg_local_update, server_aggregate, PerFedAvgParams,
};
use super::{Algorithm, CipherKind, EngineError, ExperimentConfig};
use crate::csahe::{
    keygen, ring_aggregate, AheKeyPair, CipherSuite, NullCipher, RingRngs, RingState,
};
use crate::data::UserData;
use crate::metrics::multiclass_accuracy;
use crate::model::{loss, predict_class, DatasetShard, ModelSpec};
use crate::numeric::{ParamVector, SeededRng};

/// Test-set (and training-set) quality of one model on one user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub train_loss: f64,
    /// `None` when the user has no test samples.
    pub test_loss: Option<f64>,
    /// `None` for regression or an empty test set.
    pub test_accuracy: Option<f64>,
}

impl Evaluation {
    pub fn of(spec: &ModelSpec, w: &ParamVector, data: &UserData) -> Result<Self, EngineError> {
        let train_loss = loss(spec, w, &data.train)?;
        if data.test.is_empty() {
            return Ok(Self {
                train_loss,
                test_loss: None,
                test_accuracy: None,
            });
        }
        let test_loss = Some(loss(spec, w, &data.test)?);
        let test_accuracy = if spec.is_classifier() {
            Some(accuracy_on(spec, w, &data.test)?)
        } else {
            None
        };
        Ok(Self {
            train_loss,
            test_loss,
            test_accuracy,
        })
    }
}

/// Fraction of rows whose predicted class equals the target.
pub fn accuracy_on(
    spec: &ModelSpec,
    w: &ParamVector,
    shard: &DatasetShard,
) -> Result<f64, EngineError> {
    let predicted = (0..shard.len())
        .map(|i| predict_class(spec, w, shard.row(i)))
        .collect::<Result<Vec<_>, _>>()?;
    let truth: Vec<usize> = shard.targets().iter().map(|&t| t as usize).collect();
    multiclass_accuracy(&truth, &predicted).map_err(|e| EngineError::Config(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserResult {
    pub user: usize,
    /// The model the algorithm hands to this user before adaptation: the
    /// server model, or the user's own model for local-only training.
    pub before_adaptation: Evaluation,
    pub adapted: Option<Evaluation>,
}

impl UserResult {
    /// Adapted evaluation when there is one, otherwise the pre-adaptation one.
    pub fn final_evaluation(&self) -> &Evaluation {
        self.adapted.as_ref().unwrap_or(&self.before_adaptation)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// `None` for local-only training, which has no server.
    pub server_model: Option<ParamVector>,
    /// Loss of the model each user holds after the round, on its training split.
    pub user_train_loss: Vec<f64>,
    /// Excluded from serialized histories so they stay byte-reproducible.
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub algorithm: Algorithm,
    pub epochs: Vec<EpochRecord>,
    pub final_models: Vec<ParamVector>,
    pub adapted_models: Option<Vec<ParamVector>>,
    pub results: Vec<UserResult>,
}

impl TrainingHistory {
    pub fn final_server_model(&self) -> Option<&ParamVector> {
        self.epochs.last().and_then(|e| e.server_model.as_ref())
    }

    /// Mean test accuracy over users of the pre-adaptation models.
    pub fn mean_accuracy_before_adaptation(&self) -> Option<f64> {
        mean(
            self.results
                .iter()
                .map(|r| r.before_adaptation.test_accuracy),
        )
    }

    /// Mean test accuracy over users of the adapted models (or the
    /// pre-adaptation ones when the run did not adapt).
    pub fn mean_final_accuracy(&self) -> Option<f64> {
        mean(
            self.results
                .iter()
                .map(|r| r.final_evaluation().test_accuracy),
        )
    }

    pub fn mean_final_test_loss(&self) -> Option<f64> {
        mean(self.results.iter().map(|r| r.final_evaluation().test_loss))
    }

    pub fn wall_clock_secs(&self) -> f64 {
        self.epochs.iter().map(|e| e.wall_clock_secs).sum()
    }
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.collect::<Option<Vec<f64>>>()?;
    if v.is_empty() {
        None
    } else {
        Some(v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// What crossed the wire in one global epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "transport", rename_all = "kebab-case")]
pub enum RoundTransport {
    /// Plaintext model differences sent by each user to the server.
    Fedavg {
        epoch: usize,
        server_model: ParamVector,
        uploads: Vec<ParamVector>,
    },
    /// The encrypted ring pass and the decrypted sum reported to the server.
    Csahe {
        epoch: usize,
        server_model: ParamVector,
        ring: RingState,
        aggregate: ParamVector,
    },
}

impl RoundTransport {
    pub fn server_model(&self) -> &ParamVector {
        match self {
            RoundTransport::Fedavg { server_model, .. }
            | RoundTransport::Csahe { server_model, .. } => server_model,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TransportLog {
    pub rounds: Vec<RoundTransport>,
    /// The run's Paillier keys; written separately to model key leakage.
    #[serde(skip)]
    pub keys: Option<AheKeyPair>,
}

/// Output of [`run_training`].
#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub history: TrainingHistory,
    pub transport: TransportLog,
}

fn user_rng(seed: u64, purpose: &str, user: usize) -> SeededRng {
    SeededRng::derive(seed, purpose, &user.to_string())
}

/// Collects per-user results in user order, reporting the lowest-indexed
/// failure so errors do not depend on scheduling.
fn in_order<T>(results: Vec<Result<T, EngineError>>) -> Result<Vec<T>, EngineError> {
    results.into_iter().collect()
}

/// Runs `K` global epochs of the configured algorithm over `users`.
///
/// User `i`'s local steps draw from stream `engine/user/i` and its final
/// adaptation from `engine/adapt/i`, so the result does not depend on the
/// order in which users are processed.
pub fn run_training(
    config: &ExperimentConfig,
    users: &[UserData],
) -> Result<TrainingRun, EngineError> {
    config.validate()?;
    if users.len() != config.users {
        return Err(EngineError::Config(format!(
            "config declares {} users but {} shards were supplied",
            config.users,
            users.len()
        )));
    }
    let spec = &config.model;
    for (i, u) in users.iter().enumerate() {
        if u.train.is_empty() {
            return Err(EngineError::Config(format!(
                "user {i} has no training samples"
            )));
        }
        spec.check_batch(&u.train)?;
        if !u.test.is_empty() {
            spec.check_batch(&u.test)?;
        }
    }

    let seed = config.seed;
    let w0 = spec.init_params(&mut SeededRng::new(seed, "engine/server"));
    let mut rngs: Vec<SeededRng> = (0..users.len())
        .map(|i| user_rng(seed, "engine/user", i))
        .collect();
    let mut epochs = Vec::with_capacity(config.global_epochs);
    let mut transport = TransportLog::default();

    let final_models: Vec<ParamVector> = match config.algorithm {
        Algorithm::Centralized => {
            let parts: Vec<&DatasetShard> = users.iter().map(|u| &u.train).collect();
            let pooled = DatasetShard::concat("pooled", &parts)?;
            let mut rng = SeededRng::new(seed, "engine/central");
            let mut w = w0;
            for epoch in 0..config.global_epochs {
                let start = Instant::now();
                w = fedavg_local_update(
                    spec,
                    &w,
                    &pooled,
                    config.local_epochs,
                    config.beta,
                    config.batch_size,
                    &mut rng,
                )?;
                let user_train_loss = train_losses(spec, users, |_| &w)?;
                epochs.push(EpochRecord {
                    epoch,
                    server_model: Some(w.clone()),
                    user_train_loss,
                    wall_clock_secs: start.elapsed().as_secs_f64(),
                });
            }
            vec![w; users.len()]
        }
        Algorithm::LocalOnly => {
            let mut models = vec![w0; users.len()];
            for epoch in 0..config.global_epochs {
                let start = Instant::now();
                let updated = models
                    .par_iter()
                    .zip(users.par_iter())
                    .zip(rngs.par_iter_mut())
                    .map(|((w, u), rng)| {
                        fedavg_local_update(
                            spec,
                            w,
                            &u.train,
                            config.local_epochs,
                            config.beta,
                            config.batch_size,
                            rng,
                        )
                    })
                    .collect();
                models = in_order(updated)?;
                let user_train_loss = train_losses(spec, users, |i| &models[i])?;
                epochs.push(EpochRecord {
                    epoch,
                    server_model: None,
                    user_train_loss,
                    wall_clock_secs: start.elapsed().as_secs_f64(),
                });
            }
            models
        }
        Algorithm::Fedavg | Algorithm::Pppml => {
            let suite = match (config.algorithm, config.cipher) {
                (Algorithm::Pppml, CipherKind::Paillier) => {
                    let keys = keygen(
                        config.paillier_bits,
                        config.codec,
                        &mut SeededRng::new(seed, "engine/keygen"),
                    )?;
                    transport.keys = Some(keys.clone());
                    Some(CipherSuite::Paillier(keys))
                }
                (Algorithm::Pppml, CipherKind::Null) => {
                    Some(CipherSuite::Null(NullCipher::new(config.codec)))
                }
                _ => None,
            };
            let mut ring_rngs = RingRngs::new(seed);
            let params = PerFedAvgParams {
                steps: config.local_epochs,
                alpha: config.alpha,
                beta: config.beta,
                batch_size: config.batch_size,
                hvp: config.hvp_backend,
            };
            let mut w = w0;
            for epoch in 0..config.global_epochs {
                let start = Instant::now();
                let locals = users
                    .par_iter()
                    .zip(rngs.par_iter_mut())
                    .map(|(u, rng)| match config.algorithm {
                        Algorithm::Pppml => {
                            perfedavg_local_update(spec, &w, &u.train, &params, rng)
                        }
                        _ => fedavg_local_update(
                            spec,
                            &w,
                            &u.train,
                            config.local_epochs,
                            config.beta,
                            config.batch_size,
                            rng,
                        ),
                    })
                    .collect();
                let locals = in_order(locals)?;
                let deltas = locals
                    .iter()
                    .map(|l| l.sub(&w))
                    .collect::<Result<Vec<_>, _>>()?;
                let next = match &suite {
                    Some(suite) => {
                        let (sum, ring) =
                            ring_aggregate(&deltas, suite, config.mask_sigma, &mut ring_rngs)?;
                        let next = server_aggregate(&w, &sum, users.len())?;
                        transport.rounds.push(RoundTransport::Csahe {
                            epoch,
                            server_model: w.clone(),
                            ring,
                            aggregate: sum,
                        });
                        next
                    }
                    None => {
                        let sum = config.codec.exact_sum(&deltas)?;
                        let next = server_aggregate(&w, &sum, users.len())?;
                        transport.rounds.push(RoundTransport::Fedavg {
                            epoch,
                            server_model: w.clone(),
                            uploads: deltas,
                        });
                        next
                    }
                };
                if !next.is_finite() {
                    return Err(EngineError::Divergence(format!(
                        "server model non-finite after epoch {epoch}"
                    )));
                }
                w = next;
                let user_train_loss = train_losses(spec, users, |_| &w)?;
                epochs.push(EpochRecord {
                    epoch,
                    server_model: Some(w.clone()),
                    user_train_loss,
                    wall_clock_secs: start.elapsed().as_secs_f64(),
                });
            }
            vec![w; users.len()]
        }
    };

    let adapted_models = if config.adapts() {
        let adapted = final_models
            .par_iter()
            .zip(users.par_iter())
            .enumerate()
            .map(|(i, (w, u))| {
                let mut rng = user_rng(seed, "engine/adapt", i);
                adapt(
                    spec,
                    w,
                    &u.train,
                    config.adapt_epochs,
                    config.beta,
                    config.batch_size,
                    &mut rng,
                )
            })
            .collect();
        Some(in_order(adapted)?)
    } else {
        None
    };

    let results = users
        .iter()
        .enumerate()
        .map(|(i, u)| {
            Ok(UserResult {
                user: i,
                before_adaptation: Evaluation::of(spec, &final_models[i], u)?,
                adapted: match &adapted_models {
                    Some(models) => Some(Evaluation::of(spec, &models[i], u)?),
                    None => None,
                },
            })
        })
        .collect::<Result<Vec<_>, EngineError>>()?;

    Ok(TrainingRun {
        history: TrainingHistory {
            algorithm: config.algorithm,
            epochs,
            final_models,
            adapted_models,
            results,
        },
        transport,
    })
}

fn train_losses<'a>(
    spec: &ModelSpec,
    users: &[UserData],
    model: impl Fn(usize) -> &'a ParamVector,
) -> Result<Vec<f64>, EngineError> {
    users
        .iter()
        .enumerate()
        .map(|(i, u)| Ok(loss(spec, model(i), &u.train)?))
        .collect()
}
