//! Synthetic heterogeneous user datasets and a CSV shard loader.

mod csv_io;

pub use csv_io::{load_shards, write_shards};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::DatasetShard;
use crate::numeric::{gaussian_vector, ParamVector, SeededRng};

/// Fraction of each user's samples placed in the training split.
pub const TRAIN_FRACTION: f64 = 0.8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("invalid profile: {0}")]
    Argument(String),

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("i/o error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Regression,
    Classification,
}

/// Knobs of the synthetic federation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeterogeneityProfile {
    pub n_users: usize,
    pub samples_per_user: Vec<usize>,
    pub task: Task,
    /// Regression: norm of each user's offset from the shared optimum.
    /// Classification: tangent of the per-user rotation of the class means.
    pub shift_magnitude: f64,
    pub feature_dim: usize,
    /// Regression: noise standard deviation. Classification: flip probability.
    pub label_noise: f64,
    #[serde(default = "default_classes")]
    pub classes: usize,
    /// Distance of each class mean from the origin (classification only).
    #[serde(default = "default_separation")]
    pub class_separation: f64,
}

fn default_classes() -> usize {
    2
}

fn default_separation() -> f64 {
    1.5
}

impl HeterogeneityProfile {
    pub fn regression(n_users: usize, samples: usize, feature_dim: usize, shift: f64) -> Self {
        Self {
            n_users,
            samples_per_user: vec![samples; n_users],
            task: Task::Regression,
            shift_magnitude: shift,
            feature_dim,
            label_noise: 0.05,
            classes: default_classes(),
            class_separation: default_separation(),
        }
    }

    pub fn classification(
        n_users: usize,
        samples: usize,
        feature_dim: usize,
        classes: usize,
        shift: f64,
    ) -> Self {
        Self {
            n_users,
            samples_per_user: vec![samples; n_users],
            task: Task::Classification,
            shift_magnitude: shift,
            feature_dim,
            label_noise: 0.05,
            classes,
            class_separation: default_separation(),
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let fail = |m: String| Err(DataError::Argument(m));
        if self.n_users < 2 {
            return fail(format!("need at least 2 users, got {}", self.n_users));
        }
        if self.samples_per_user.len() != self.n_users {
            return fail(format!(
                "samples_per_user has {} entries for {} users",
                self.samples_per_user.len(),
                self.n_users
            ));
        }
        if let Some(i) = self.samples_per_user.iter().position(|&s| s == 0) {
            return fail(format!("user {i} has no samples"));
        }
        if self.feature_dim == 0 {
            return fail("feature_dim must be positive".into());
        }
        if !(self.shift_magnitude >= 0.0 && self.shift_magnitude.is_finite()) {
            return fail(format!(
                "shift_magnitude {} must be finite and >= 0",
                self.shift_magnitude
            ));
        }
        match self.task {
            Task::Regression => {
                if !(self.label_noise >= 0.0 && self.label_noise.is_finite()) {
                    return fail(format!("noise level {} must be >= 0", self.label_noise));
                }
                if self.shift_magnitude > 0.0 && self.feature_dim < 2 {
                    return fail("non-parallel user shifts need feature_dim >= 2".into());
                }
            }
            Task::Classification => {
                if !(0.0..1.0).contains(&self.label_noise) {
                    return fail(format!(
                        "flip probability {} outside [0, 1)",
                        self.label_noise
                    ));
                }
                if self.classes < 2 {
                    return fail(format!("need at least 2 classes, got {}", self.classes));
                }
                if self.feature_dim < 2 * self.classes {
                    return fail(format!(
                        "feature_dim {} too small for {} classes (need 2 * classes)",
                        self.feature_dim, self.classes
                    ));
                }
                if !(self.class_separation > 0.0 && self.class_separation.is_finite()) {
                    return fail(format!(
                        "class_separation {} must be positive",
                        self.class_separation
                    ));
                }
            }
        }
        Ok(())
    }

    /// Number of model outputs the task calls for.
    pub fn outputs(&self) -> usize {
        match self.task {
            Task::Regression => 1,
            Task::Classification => self.classes,
        }
    }
}

/// One user's train/test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserData {
    pub train: DatasetShard,
    pub test: DatasetShard,
}

/// Generates one train/test split per user, deterministically in `seed`.
pub fn make_users(profile: &HeterogeneityProfile, seed: u64) -> Result<Vec<UserData>, DataError> {
    profile.validate()?;
    let mut global = SeededRng::new(seed, "data/global");
    let generator = match profile.task {
        Task::Regression => Generator::regression(profile, &mut global),
        Task::Classification => Generator::classification(profile, &mut global),
    };
    (0..profile.n_users)
        .map(|i| {
            let mut rng = SeededRng::derive(seed, "data/user", &i.to_string());
            let shard = generator.sample(profile, i, &mut rng)?;
            Ok(split(&shard))
        })
        .collect()
}

/// Splits a shard 80/20 in row order; at least one row goes to training.
pub fn split(shard: &DatasetShard) -> UserData {
    let n_train = ((shard.len() as f64 * TRAIN_FRACTION).round() as usize).clamp(1, shard.len());
    let (train, test) = shard.split_at(n_train);
    UserData { train, test }
}

enum Generator {
    /// Per-user true weights (the last entry is the bias).
    Regression { weights: Vec<ParamVector> },
    /// `means[user][class]`.
    Classification { means: Vec<Vec<ParamVector>> },
}

impl Generator {
    fn regression(profile: &HeterogeneityProfile, rng: &mut SeededRng) -> Self {
        let d = profile.feature_dim;
        let shared = gaussian_vector(d + 1, 0.0, 1.0, rng).expect("valid dimension");
        let directions = non_parallel_directions(profile.n_users, d, rng);
        let weights = directions
            .iter()
            .map(|u| {
                let mut w = shared.clone();
                for (k, x) in u.iter().enumerate() {
                    w[k] += profile.shift_magnitude * x;
                }
                w
            })
            .collect();
        Generator::Regression { weights }
    }

    fn classification(profile: &HeterogeneityProfile, rng: &mut SeededRng) -> Self {
        let d = profile.feature_dim;
        let c = profile.classes;
        // Shared class directions: an orthonormal set, centred so the classes
        // sit symmetrically around the origin.
        let basis = orthonormal(c, d, &[], rng);
        let centre = ParamVector::sum_all(&basis)
            .expect("same dims")
            .scale(1.0 / c as f64);
        let shared: Vec<ParamVector> = basis
            .iter()
            .map(|b| {
                let v = b.sub(&centre).expect("same dims");
                let norm = v.norm2();
                v.scale(profile.class_separation / norm)
            })
            .collect();
        // Each user rotates the whole configuration by its own angle within
        // the planes spanned by (a_c, b_c), where the b_c are orthonormal and
        // orthogonal to the shared directions a_c. Angles spread evenly over
        // [-atan(shift), atan(shift)].
        let partner = orthonormal(c, d, &basis, rng);
        let max_angle = profile.shift_magnitude.atan();
        let n = profile.n_users;
        let means = (0..n)
            .map(|i| {
                let angle = max_angle * (2.0 * i as f64 / (n - 1) as f64 - 1.0);
                shared
                    .iter()
                    .map(|m| {
                        // Coordinates of m in the (a, b) planes: only a-components.
                        let mut out = m.scale(angle.cos());
                        for (a, b) in basis.iter().zip(&partner) {
                            let coef = m.dot(a).expect("same dims");
                            out = out.axpy(angle.sin() * coef, b).expect("same dims");
                        }
                        out
                    })
                    .collect()
            })
            .collect();
        Generator::Classification { means }
    }

    fn sample(
        &self,
        profile: &HeterogeneityProfile,
        user: usize,
        rng: &mut SeededRng,
    ) -> Result<DatasetShard, DataError> {
        let n = profile.samples_per_user[user];
        let d = profile.feature_dim;
        let mut inputs = Vec::with_capacity(n * d);
        let mut targets = Vec::with_capacity(n);
        match self {
            Generator::Regression { weights } => {
                let w = &weights[user];
                for _ in 0..n {
                    let x = gaussian_vector(d, 0.0, 1.0, rng).expect("valid dimension");
                    let mut y = w[d];
                    for k in 0..d {
                        y += w[k] * x[k];
                    }
                    if profile.label_noise > 0.0 {
                        y += gaussian_vector(1, 0.0, profile.label_noise, rng).expect("valid")[0];
                    }
                    inputs.extend(x.iter());
                    targets.push(y);
                }
            }
            Generator::Classification { means } => {
                let c = profile.classes;
                for _ in 0..n {
                    let class = rng.random_range(0..c);
                    let x = gaussian_vector(d, 0.0, 1.0, rng).expect("valid dimension");
                    let x = x.add(&means[user][class]).expect("same dims");
                    let mut label = class;
                    if rng.random::<f64>() < profile.label_noise {
                        label = (class + rng.random_range(1..c)) % c;
                    }
                    inputs.extend(x.iter());
                    targets.push(label as f64);
                }
            }
        }
        DatasetShard::new(format!("user{user}"), d, inputs, targets)
            .map_err(|e| DataError::Argument(e.to_string()))
    }
}

/// `count` unit vectors in `R^dim` with pairwise |cos| below 0.99.
fn non_parallel_directions(count: usize, dim: usize, rng: &mut SeededRng) -> Vec<ParamVector> {
    let mut out: Vec<ParamVector> = Vec::with_capacity(count);
    while out.len() < count {
        let v = gaussian_vector(dim, 0.0, 1.0, rng).expect("valid dimension");
        let norm = v.norm2();
        if norm < 1e-9 {
            continue;
        }
        let v = v.scale(1.0 / norm);
        if dim == 1
            || out
                .iter()
                .all(|u| u.dot(&v).expect("same dims").abs() < 0.99)
        {
            out.push(v);
        }
    }
    out
}

/// `count` random orthonormal vectors that are also orthogonal to `against`
/// (assumed orthonormal). Gram-Schmidt on Gaussian draws.
fn orthonormal(
    count: usize,
    dim: usize,
    against: &[ParamVector],
    rng: &mut SeededRng,
) -> Vec<ParamVector> {
    let mut basis: Vec<ParamVector> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v = gaussian_vector(dim, 0.0, 1.0, rng).expect("valid dimension");
        for b in against.iter().chain(basis.iter()) {
            let proj = v.dot(b).expect("same dims");
            v = v.axpy(-proj, b).expect("same dims");
        }
        let norm = v.norm2();
        if norm > 1e-6 {
            basis.push(v.scale(1.0 / norm));
        }
    }
    basis
}

/// Uniformly shuffled copy of `0..n`.
pub fn shuffled_indices<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_follow_profile() {
        let mut p = HeterogeneityProfile::classification(3, 10, 8, 3, 1.0);
        p.samples_per_user = vec![174, 68, 150];
        let users = make_users(&p, 4).unwrap();
        let sizes: Vec<usize> = users.iter().map(|u| u.train.len() + u.test.len()).collect();
        assert_eq!(sizes, vec![174, 68, 150]);
        assert_eq!(users[0].train.len(), 139);
        assert_eq!(users[1].test.len(), 14);
    }

    #[test]
    fn deterministic_in_seed() {
        let p = HeterogeneityProfile::regression(3, 20, 4, 2.0);
        assert_eq!(make_users(&p, 9).unwrap(), make_users(&p, 9).unwrap());
        assert_ne!(make_users(&p, 9).unwrap(), make_users(&p, 10).unwrap());
    }

    #[test]
    fn single_sample_users_train_on_it() {
        let p = HeterogeneityProfile::classification(3, 1, 4, 2, 0.0);
        let users = make_users(&p, 1).unwrap();
        assert!(users
            .iter()
            .all(|u| u.train.len() == 1 && u.test.is_empty()));
    }

    #[test]
    fn invalid_profiles() {
        let mut p = HeterogeneityProfile::regression(1, 10, 3, 0.0);
        assert!(matches!(make_users(&p, 0), Err(DataError::Argument(_))));
        p.n_users = 2;
        assert!(make_users(&p, 0).is_err());
        p.samples_per_user = vec![3, 0];
        assert!(make_users(&p, 0).is_err());
        let mut q = HeterogeneityProfile::regression(2, 10, 1, 1.0);
        assert!(make_users(&q, 0).is_err());
        q.shift_magnitude = 0.0;
        assert!(make_users(&q, 0).is_ok());
        let c = HeterogeneityProfile::classification(3, 10, 3, 3, 1.0);
        assert!(make_users(&c, 0).is_err());
    }

    #[test]
    fn labels_are_class_indices() {
        let p = HeterogeneityProfile::classification(3, 50, 8, 4, 5.0);
        for u in make_users(&p, 2).unwrap() {
            assert!(u
                .train
                .targets()
                .iter()
                .all(|&t| (0.0..4.0).contains(&t) && t.fract() == 0.0));
        }
    }

    #[test]
    fn orthonormal_sets() {
        let mut rng = SeededRng::new(0, "t");
        let a = orthonormal(3, 6, &[], &mut rng);
        let b = orthonormal(2, 6, &a, &mut rng);
        let all: Vec<_> = a.iter().chain(b.iter()).collect();
        for (i, u) in all.iter().enumerate() {
            for (j, v) in all.iter().enumerate() {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((u.dot(v).unwrap() - expected).abs() < 1e-12);
            }
        }
    }
}
