use serde::{Deserialize, Serialize};

use super::ModelError;

/// One user's samples: a row-major input matrix and one target per row.
///
/// Regression targets are reals; classification targets are class indices
/// stored as integral `f64`s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetShard {
    pub user_id: String,
    features: usize,
    inputs: Vec<f64>,
    targets: Vec<f64>,
}

impl DatasetShard {
    pub fn new(
        user_id: impl Into<String>,
        features: usize,
        inputs: Vec<f64>,
        targets: Vec<f64>,
    ) -> Result<Self, ModelError> {
        if features == 0 {
            return Err(ModelError::InvalidData(
                "feature dimension must be positive".into(),
            ));
        }
        if inputs.len() != features * targets.len() {
            return Err(ModelError::InvalidData(format!(
                "{} input values do not form {} rows of {} features",
                inputs.len(),
                targets.len(),
                features
            )));
        }
        Ok(Self {
            user_id: user_id.into(),
            features,
            inputs,
            targets,
        })
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.features..(i + 1) * self.features]
    }

    pub fn target(&self, i: usize) -> f64 {
        self.targets[i]
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    /// Rows at `indices`, in that order (duplicates allowed).
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut inputs = Vec::with_capacity(indices.len() * self.features);
        let mut targets = Vec::with_capacity(indices.len());
        for &i in indices {
            inputs.extend_from_slice(self.row(i));
            targets.push(self.targets[i]);
        }
        Self {
            user_id: self.user_id.clone(),
            features: self.features,
            inputs,
            targets,
        }
    }

    /// Splits into the first `train` rows and the remainder.
    pub fn split_at(&self, train: usize) -> (Self, Self) {
        let train = train.min(self.len());
        let head: Vec<usize> = (0..train).collect();
        let tail: Vec<usize> = (train..self.len()).collect();
        (self.subset(&head), self.subset(&tail))
    }

    /// Row-wise concatenation of shards sharing a feature dimension.
    pub fn concat(
        user_id: impl Into<String>,
        shards: &[&DatasetShard],
    ) -> Result<Self, ModelError> {
        let first = shards
            .first()
            .ok_or_else(|| ModelError::InvalidData("nothing to concatenate".into()))?;
        let features = first.features;
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        for s in shards {
            if s.features != features {
                return Err(ModelError::Dimension {
                    expected: features,
                    actual: s.features,
                });
            }
            inputs.extend_from_slice(&s.inputs);
            targets.extend_from_slice(&s.targets);
        }
        Self::new(user_id, features, inputs, targets)
    }
}
