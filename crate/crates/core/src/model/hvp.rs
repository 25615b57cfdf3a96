use serde::{Deserialize, Serialize};

use super::network::{grad, predict};
use super::{DatasetShard, LossKind, ModelError, ModelSpec};
use crate::numeric::ParamVector;

/// How Hessian-vector products are evaluated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HvpBackend {
    /// Symmetric gradient difference; works for every model.
    #[default]
    FiniteDifference,
    /// Closed-form product; linear and logistic regression only.
    Exact,
}

/// `H(w) v` estimated as `(grad(w + εv) - grad(w - εv)) / 2ε` with
/// `ε = 1e-5 (1 + |w|_inf)` measured along the unit direction of `v`.
pub fn hvp(
    spec: &ModelSpec,
    w: &ParamVector,
    v: &ParamVector,
    batch: &DatasetShard,
) -> Result<ParamVector, ModelError> {
    spec.check_params(w)?;
    spec.check_params(v)?;
    let norm = v.norm2();
    if norm == 0.0 {
        spec.check_batch(batch)?;
        return Ok(ParamVector::zeros(w.dim()));
    }
    let eps = 1e-5 * (1.0 + w.norm_inf());
    let step = eps / norm;
    let plus = w.axpy(step, v).expect("dimensions checked");
    let minus = w.axpy(-step, v).expect("dimensions checked");
    let gp = grad(spec, &plus, batch)?;
    let gm = grad(spec, &minus, batch)?;
    Ok(gp.sub(&gm).expect("same model").scale(1.0 / (2.0 * step)))
}

/// Closed-form `H(w) v` for single-layer models.
///
/// With logits `z = Wx + b`, the per-sample Hessian is `Jᵀ A J` where `J`
/// maps parameters to outputs and `A` is the output curvature: the identity
/// for squared error, `diag(p) - ppᵀ` for softmax cross-entropy.
pub fn hvp_exact(
    spec: &ModelSpec,
    w: &ParamVector,
    v: &ParamVector,
    batch: &DatasetShard,
) -> Result<ParamVector, ModelError> {
    spec.validate()?;
    if !spec.has_exact_hessian() {
        return Err(ModelError::Unsupported(
            "exact Hessian-vector products need a single-layer model".into(),
        ));
    }
    spec.check_params(w)?;
    spec.check_params(v)?;
    spec.check_batch(batch)?;
    let layer = spec.final_layer();
    let vs = v.as_slice();
    let scale = 1.0 / batch.len() as f64;
    let mut out = vec![0.0; spec.param_dim()];
    for i in 0..batch.len() {
        let x = batch.row(i);
        let dz: Vec<f64> = (0..layer.outputs)
            .map(|r| {
                layer.bias(vs)[r]
                    + layer
                        .weight_row(vs, r)
                        .iter()
                        .zip(x)
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
            })
            .collect();
        let u = match spec.loss {
            LossKind::SquaredError => dz,
            LossKind::CrossEntropy => {
                let logits = predict(spec, w, x)?;
                let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
                let total: f64 = exps.iter().sum();
                let p: Vec<f64> = exps.iter().map(|e| e / total).collect();
                let pdz: f64 = p.iter().zip(&dz).map(|(a, b)| a * b).sum();
                p.iter().zip(&dz).map(|(pi, di)| pi * (di - pdz)).collect()
            }
        };
        for (r, ur) in u.iter().enumerate() {
            let start = layer.weight_offset + r * layer.inputs;
            for (o, xj) in out[start..start + layer.inputs].iter_mut().zip(x) {
                *o += scale * ur * xj;
            }
            out[layer.bias_offset + r] += scale * ur;
        }
    }
    Ok(ParamVector::from_vec_unchecked(out))
}

pub fn hvp_with(
    backend: HvpBackend,
    spec: &ModelSpec,
    w: &ParamVector,
    v: &ParamVector,
    batch: &DatasetShard,
) -> Result<ParamVector, ModelError> {
    match backend {
        HvpBackend::FiniteDifference => hvp(spec, w, v, batch),
        HvpBackend::Exact => hvp_exact(spec, w, v, batch),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_direction_gives_zero() {
        let spec = ModelSpec::logistic_regression(2, 2);
        let w = ParamVector::new(vec![0.1, 0.2, -0.3, 0.4, 0.0, 0.1]).unwrap();
        let batch = DatasetShard::new("u", 2, vec![1.0, -1.0], vec![1.0]).unwrap();
        let v = ParamVector::zeros(6);
        assert_eq!(hvp(&spec, &w, &v, &batch).unwrap(), v);
        assert_eq!(hvp_exact(&spec, &w, &v, &batch).unwrap(), v);
    }

    #[test]
    fn exact_backend_rejects_mlp() {
        let spec = ModelSpec::mlp(vec![2, 3, 1], LossKind::SquaredError);
        let w = ParamVector::zeros(spec.param_dim());
        let batch = DatasetShard::new("u", 2, vec![1.0, -1.0], vec![1.0]).unwrap();
        assert!(matches!(
            hvp_exact(&spec, &w, &w, &batch),
            Err(ModelError::Unsupported(_))
        ));
    }

    #[test]
    fn dimension_checked() {
        let spec = ModelSpec::linear_regression(2);
        let batch = DatasetShard::new("u", 2, vec![1.0, -1.0], vec![1.0]).unwrap();
        let w = ParamVector::zeros(3);
        assert!(hvp(&spec, &w, &ParamVector::zeros(2), &batch).is_err());
    }
}
