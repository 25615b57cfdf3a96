//! Differentiable toy models: loss, stochastic gradient and Hessian-vector
//! products over a flat parameter vector.
//!
//! Parameters are laid out layer by layer; each layer stores its weight
//! matrix row-major (`out x in`) followed by its bias. Linear and logistic
//! regression are single-layer networks without activation; the MLP applies
//! `tanh` on every hidden layer.

mod dataset;
mod hvp;
mod network;

pub use dataset::DatasetShard;
pub use hvp::{hvp, hvp_exact, hvp_with, HvpBackend};
pub use network::{grad, loss, loss_and_grad, output_error, predict, predict_class};

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::ParamVector;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("empty batch")]
    EmptyBatch,

    #[error("invalid model: {0}")]
    InvalidSpec(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("target {target} at row {row} is not a class index below {classes}")]
    InvalidTarget {
        row: usize,
        target: f64,
        classes: usize,
    },

    #[error("unsupported for this model: {0}")]
    Unsupported(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    LinearRegression,
    LogisticRegression,
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    SquaredError,
    CrossEntropy,
}

/// Offsets of one dense layer inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerBlock {
    pub inputs: usize,
    pub outputs: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

impl LayerBlock {
    pub fn weight(&self, params: &[f64], row: usize, col: usize) -> f64 {
        params[self.weight_offset + row * self.inputs + col]
    }

    pub fn weight_row<'a>(&self, params: &'a [f64], row: usize) -> &'a [f64] {
        let start = self.weight_offset + row * self.inputs;
        &params[start..start + self.inputs]
    }

    pub fn bias<'a>(&self, params: &'a [f64]) -> &'a [f64] {
        &params[self.bias_offset..self.bias_offset + self.outputs]
    }

    pub fn end(&self) -> usize {
        self.bias_offset + self.outputs
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub layer_dims: Vec<usize>,
    pub loss: LossKind,
}

impl ModelSpec {
    pub fn linear_regression(features: usize) -> Self {
        Self {
            kind: ModelKind::LinearRegression,
            layer_dims: vec![features, 1],
            loss: LossKind::SquaredError,
        }
    }

    pub fn logistic_regression(features: usize, classes: usize) -> Self {
        Self {
            kind: ModelKind::LogisticRegression,
            layer_dims: vec![features, classes],
            loss: LossKind::CrossEntropy,
        }
    }

    pub fn mlp(layer_dims: Vec<usize>, loss: LossKind) -> Self {
        Self {
            kind: ModelKind::Mlp,
            layer_dims,
            loss,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let dims = &self.layer_dims;
        if dims.contains(&0) {
            return Err(ModelError::InvalidSpec(
                "layer dimensions must be positive".into(),
            ));
        }
        match self.kind {
            ModelKind::LinearRegression | ModelKind::LogisticRegression if dims.len() != 2 => {
                return Err(ModelError::InvalidSpec(
                    "linear models take exactly [inputs, outputs]".into(),
                ))
            }
            ModelKind::Mlp if dims.len() < 3 => {
                return Err(ModelError::InvalidSpec(
                    "an MLP needs at least one hidden layer".into(),
                ))
            }
            _ => {}
        }
        match (self.kind, self.loss) {
            (ModelKind::LinearRegression, LossKind::CrossEntropy)
            | (ModelKind::LogisticRegression, LossKind::SquaredError) => {
                return Err(ModelError::InvalidSpec(format!(
                    "{:?} does not pair with {:?}",
                    self.kind, self.loss
                )))
            }
            _ => {}
        }
        match self.loss {
            LossKind::SquaredError if self.output_dim() != 1 => Err(ModelError::InvalidSpec(
                "squared error expects a single output".into(),
            )),
            LossKind::CrossEntropy if self.output_dim() < 2 => Err(ModelError::InvalidSpec(
                "cross-entropy needs at least two classes".into(),
            )),
            _ => Ok(()),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().expect("layer_dims is never empty")
    }

    pub fn is_classifier(&self) -> bool {
        self.loss == LossKind::CrossEntropy
    }

    /// Whether the exact Hessian-vector product backend is available.
    pub fn has_exact_hessian(&self) -> bool {
        self.kind != ModelKind::Mlp
    }

    pub fn layers(&self) -> Vec<LayerBlock> {
        let mut offset = 0;
        self.layer_dims
            .windows(2)
            .map(|w| {
                let block = LayerBlock {
                    inputs: w[0],
                    outputs: w[1],
                    weight_offset: offset,
                    bias_offset: offset + w[0] * w[1],
                };
                offset = block.end();
                block
            })
            .collect()
    }

    pub fn final_layer(&self) -> LayerBlock {
        *self.layers().last().expect("validated specs have a layer")
    }

    pub fn param_dim(&self) -> usize {
        self.layers().last().map(|l| l.end()).unwrap_or(0)
    }

    pub fn check_params(&self, w: &ParamVector) -> Result<(), ModelError> {
        if w.dim() != self.param_dim() {
            return Err(ModelError::Dimension {
                expected: self.param_dim(),
                actual: w.dim(),
            });
        }
        Ok(())
    }

    pub fn check_batch(&self, batch: &DatasetShard) -> Result<(), ModelError> {
        if batch.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        if batch.features() != self.input_dim() {
            return Err(ModelError::Dimension {
                expected: self.input_dim(),
                actual: batch.features(),
            });
        }
        if self.is_classifier() {
            let classes = self.output_dim();
            for (row, &t) in batch.targets().iter().enumerate() {
                if t < 0.0 || t.fract() != 0.0 || t as usize >= classes {
                    return Err(ModelError::InvalidTarget {
                        row,
                        target: t,
                        classes,
                    });
                }
            }
        }
        Ok(())
    }

    /// Initial server model: zeros for linear models; for the MLP, weights
    /// uniform in `±1/sqrt(fan_in)` and zero biases.
    pub fn init_params<R: RngCore + ?Sized>(&self, rng: &mut R) -> ParamVector {
        let mut w = ParamVector::zeros(self.param_dim());
        if self.kind == ModelKind::Mlp {
            for layer in self.layers() {
                let bound = 1.0 / (layer.inputs as f64).sqrt();
                for i in layer.weight_offset..layer.bias_offset {
                    w[i] = rng.random_range(-bound..bound);
                }
            }
        }
        w
    }
}
