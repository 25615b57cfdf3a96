//! Run configuration: the JSON schema, flag overrides and resolution into an
//! engine config plus user data.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use fedring_core::csahe::MaskPolicy;
use fedring_core::data::{self, HeterogeneityProfile, Task, UserData};
use fedring_core::engine::{Algorithm, CipherKind, ExperimentConfig};
use fedring_core::model::{HvpBackend, LossKind, ModelSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const SEED_ENV: &str = "FEDRING_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    Iid,
    Heterogeneous,
}

/// The on-disk config schema. Every field is optional; missing fields take
/// the defaults below and unknown fields are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub users: usize,
    pub global_epochs: usize,
    pub local_epochs: usize,
    pub adapt_epochs: usize,
    pub alpha: f64,
    pub beta: f64,
    pub batch_size: usize,
    pub cipher: CipherKind,
    /// Fixed mask standard deviation; `None` scales it to the gradients.
    pub mask_sigma: Option<f64>,
    pub paillier_bits: u32,
    pub seed: Option<u64>,
    pub profile: Profile,
    /// Heterogeneity strength; defaults to 5 for the heterogeneous profile.
    pub shift: Option<f64>,
    pub task: Task,
    pub samples_per_user: usize,
    pub features: usize,
    pub classes: usize,
    pub class_separation: f64,
    pub label_noise: f64,
    /// Hidden layer widths; empty selects a single-layer model.
    pub hidden: Vec<usize>,
    pub hvp_backend: HvpBackend,
    pub adapt_baselines: bool,
    /// CSV shards to train on instead of synthetic data.
    pub data: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Pppml,
            users: 3,
            global_epochs: 20,
            local_epochs: 10,
            adapt_epochs: 5,
            alpha: 0.01,
            beta: 1e-4,
            batch_size: 64,
            cipher: CipherKind::Paillier,
            mask_sigma: None,
            paillier_bits: 1024,
            seed: None,
            profile: Profile::Heterogeneous,
            shift: None,
            task: Task::Classification,
            samples_per_user: 500,
            features: 20,
            classes: 2,
            class_separation: 1.5,
            label_noise: 0.05,
            hidden: Vec::new(),
            hvp_backend: HvpBackend::FiniteDifference,
            adapt_baselines: false,
            data: None,
        }
    }
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    s.parse()
}

fn parse_cipher(s: &str) -> Result<CipherKind, String> {
    s.parse()
}

fn parse_task(s: &str) -> Result<Task, String> {
    match s {
        "classification" => Ok(Task::Classification),
        "regression" => Ok(Task::Regression),
        _ => Err(format!(
            "unknown task {s:?} (expected classification or regression)"
        )),
    }
}

fn parse_hvp(s: &str) -> Result<HvpBackend, String> {
    match s {
        "finite-difference" => Ok(HvpBackend::FiniteDifference),
        "exact" => Ok(HvpBackend::Exact),
        _ => Err(format!(
            "unknown HVP backend {s:?} (expected finite-difference or exact)"
        )),
    }
}

/// Flags shared by `train` and `compare`. Each one overrides the matching
/// config-file field.
#[derive(Debug, Clone, Default, Args)]
pub struct RunFlags {
    /// JSON config file.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = parse_algorithm)]
    pub algorithm: Option<Algorithm>,
    #[arg(long)]
    pub users: Option<usize>,
    /// K
    #[arg(long)]
    pub global_epochs: Option<usize>,
    /// τ
    #[arg(long)]
    pub local_epochs: Option<usize>,
    /// γ
    #[arg(long)]
    pub adapt_epochs: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// null or paillier.
    #[arg(long, value_parser = parse_cipher)]
    pub cipher: Option<CipherKind>,
    /// Fixed mask standard deviation (must exceed 100).
    #[arg(long)]
    pub mask_sigma: Option<f64>,
    #[arg(long)]
    pub paillier_bits: Option<u32>,
    /// Falls back to the config file, then FEDRING_SEED, then 0.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub profile: Option<Profile>,
    #[arg(long)]
    pub shift: Option<f64>,
    /// classification or regression.
    #[arg(long, value_parser = parse_task)]
    pub task: Option<Task>,
    #[arg(long)]
    pub samples_per_user: Option<usize>,
    #[arg(long)]
    pub features: Option<usize>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub class_separation: Option<f64>,
    #[arg(long)]
    pub label_noise: Option<f64>,
    /// Comma-separated hidden layer widths.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    /// finite-difference or exact.
    #[arg(long, value_parser = parse_hvp)]
    pub hvp_backend: Option<HvpBackend>,
    /// Adapt the final model of every algorithm, not just pppml.
    #[arg(long)]
    pub adapt_baselines: bool,
    /// CSV shards (`user_id,target,f0,...`) instead of synthetic data.
    #[arg(long, value_name = "PATH")]
    pub data: Option<PathBuf>,
}

impl RunFlags {
    pub fn apply(&self, c: &mut RunConfig) {
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = &self.$field { c.$field = v.clone(); })*
            };
        }
        set!(
            algorithm,
            users,
            global_epochs,
            local_epochs,
            adapt_epochs,
            alpha,
            beta,
            batch_size,
            cipher,
            paillier_bits,
            profile,
            task,
            samples_per_user,
            features,
            classes,
            class_separation,
            label_noise,
            hidden,
            hvp_backend
        );
        if self.mask_sigma.is_some() {
            c.mask_sigma = self.mask_sigma;
        }
        if self.seed.is_some() {
            c.seed = self.seed;
        }
        if self.shift.is_some() {
            c.shift = self.shift;
        }
        if self.data.is_some() {
            c.data = self.data.clone();
        }
        if self.adapt_baselines {
            c.adapt_baselines = true;
        }
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// File values, then flags, then the seed fallback chain.
pub fn load(flags: &RunFlags) -> Result<RunConfig, CliError> {
    let mut config = match &flags.config {
        Some(path) => read_json(path)?,
        None => RunConfig::default(),
    };
    flags.apply(&mut config);
    fill_seed(&mut config)?;
    Ok(config)
}

pub fn fill_seed(config: &mut RunConfig) -> Result<(), CliError> {
    if config.seed.is_none() {
        config.seed = Some(match std::env::var(SEED_ENV) {
            Ok(s) => s.trim().parse().map_err(|_| {
                CliError::Config(format!("{SEED_ENV}={s:?} is not an unsigned integer"))
            })?,
            Err(_) => 0,
        });
    }
    Ok(())
}

/// A config with everything needed to run it.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: RunConfig,
    pub experiment: ExperimentConfig,
    pub users: Vec<UserData>,
}

impl RunConfig {
    pub fn seed_value(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    /// Stable identifier: the first 16 hex digits of the config's SHA-256.
    pub fn run_id(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(&Sha256::digest(&json)[..8])
    }

    pub fn shift_value(&self) -> Result<f64, CliError> {
        match (self.profile, self.shift) {
            (Profile::Iid, Some(s)) if s != 0.0 => Err(CliError::Config(format!(
                "shift: the iid profile has no shift, got {s}"
            ))),
            (Profile::Iid, _) => Ok(0.0),
            (Profile::Heterogeneous, s) => Ok(s.unwrap_or(5.0)),
        }
    }

    pub fn synthetic_profile(&self) -> Result<HeterogeneityProfile, CliError> {
        let shift = self.shift_value()?;
        let mut profile = match self.task {
            Task::Classification => HeterogeneityProfile::classification(
                self.users,
                self.samples_per_user,
                self.features,
                self.classes,
                shift,
            ),
            Task::Regression => HeterogeneityProfile::regression(
                self.users,
                self.samples_per_user,
                self.features,
                shift,
            ),
        };
        profile.label_noise = self.label_noise;
        profile.class_separation = self.class_separation;
        Ok(profile)
    }

    fn model(&self, features: usize) -> ModelSpec {
        let (outputs, loss) = match self.task {
            Task::Classification => (self.classes, LossKind::CrossEntropy),
            Task::Regression => (1, LossKind::SquaredError),
        };
        if self.hidden.is_empty() {
            match self.task {
                Task::Classification => ModelSpec::logistic_regression(features, outputs),
                Task::Regression => ModelSpec::linear_regression(features),
            }
        } else {
            let mut dims = vec![features];
            dims.extend(&self.hidden);
            dims.push(outputs);
            ModelSpec::mlp(dims, loss)
        }
    }

    pub fn experiment(&self, features: usize) -> Result<ExperimentConfig, CliError> {
        let mut e = ExperimentConfig::new(self.algorithm, self.model(features), self.users);
        e.global_epochs = self.global_epochs;
        e.local_epochs = self.local_epochs;
        e.adapt_epochs = self.adapt_epochs;
        e.alpha = self.alpha;
        e.beta = self.beta;
        e.batch_size = self.batch_size;
        e.cipher = self.cipher;
        e.mask_sigma = match self.mask_sigma {
            Some(s) => MaskPolicy::Fixed(s),
            None => MaskPolicy::Auto,
        };
        e.paillier_bits = self.paillier_bits;
        e.hvp_backend = self.hvp_backend;
        e.adapt_baselines = self.adapt_baselines;
        e.seed = self.seed_value();
        e.validate()?;
        Ok(e)
    }

    /// Validates the config and builds (or loads) every user's data.
    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let users = match &self.data {
            Some(path) => {
                let shards = data::load_shards(path)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                if shards.len() != self.users {
                    return Err(CliError::Config(format!(
                        "users: config declares {} users but {} holds {} shards",
                        self.users,
                        path.display(),
                        shards.len()
                    )));
                }
                shards.iter().map(data::split).collect::<Vec<_>>()
            }
            None => {
                let profile = self.synthetic_profile()?;
                data::make_users(&profile, self.seed_value())
                    .map_err(|e| CliError::Config(e.to_string()))?
            }
        };
        let features = users[0].train.features();
        let experiment = self.experiment(features)?;
        for u in &users {
            experiment.model.check_batch(&u.train)?;
        }
        Ok(Resolved {
            config: self.clone(),
            experiment,
            users,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        let file = RunConfig {
            users: 4,
            beta: 0.3,
            seed: Some(11),
            cipher: CipherKind::Null,
            ..RunConfig::default()
        };
        std::fs::write(&path, serde_json::to_string_pretty(&file).unwrap()).unwrap();

        let loaded = load(&RunFlags {
            config: Some(path.clone()),
            ..RunFlags::default()
        })
        .unwrap();
        assert_eq!(loaded, file);

        let flags = RunFlags {
            config: Some(path),
            users: Some(5),
            seed: Some(3),
            ..RunFlags::default()
        };
        let merged = load(&flags).unwrap();
        assert_eq!(merged.users, 5);
        assert_eq!(merged.seed, Some(3));
        assert_eq!(merged.beta, 0.3);
        assert_eq!(merged.cipher, CipherKind::Null);

        let back: RunConfig =
            serde_json::from_str(&serde_json::to_string(&merged).unwrap()).unwrap();
        assert_eq!(back, merged);
    }

    #[test]
    fn unknown_fields_are_named() {
        let err =
            serde_json::from_str::<RunConfig>("{\n  \"users\": 3,\n  \"usres\": 4\n}").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("usres") && msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn partial_file_takes_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"algorithm": "fedavg"}"#).unwrap();
        assert_eq!(c.algorithm, Algorithm::Fedavg);
        assert_eq!(c.global_epochs, 20);
        assert_eq!(c.batch_size, 64);
    }

    #[test]
    fn iid_rejects_a_shift() {
        let c = RunConfig {
            profile: Profile::Iid,
            shift: Some(2.0),
            ..RunConfig::default()
        };
        assert!(c.shift_value().is_err());
        let c = RunConfig {
            profile: Profile::Iid,
            ..RunConfig::default()
        };
        assert_eq!(c.shift_value().unwrap(), 0.0);
        assert_eq!(RunConfig::default().shift_value().unwrap(), 5.0);
    }

    #[test]
    fn run_id_tracks_the_config() {
        let a = RunConfig {
            seed: Some(1),
            ..RunConfig::default()
        };
        let b = RunConfig {
            seed: Some(2),
            ..RunConfig::default()
        };
        assert_eq!(a.run_id(), a.clone().run_id());
        assert_ne!(a.run_id(), b.run_id());
        assert_eq!(a.run_id().len(), 16);
    }
}
