use rand::Rng;
use rand::RngCore;

use super::EngineError;
use crate::data::shuffled_indices;
use crate::model::{grad, hvp_with, DatasetShard, HvpBackend, ModelSpec};
use crate::numeric::ParamVector;

/// Row indices of the three mini-batches used by one local step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepBatches {
    /// D': the batch whose gradient drives the update (the only one SGD uses).
    pub outer: Vec<usize>,
    /// D: the batch of the inner look-ahead step.
    pub inner: Vec<usize>,
    /// D'': the batch of the Hessian-vector product.
    pub hessian: Vec<usize>,
}

/// Draws the batches of one local step from a shard of `n` rows.
///
/// With `n >= 3b` the shard is reshuffled and cut into three disjoint
/// batches. With `b >= n` every batch is the whole shard. Otherwise each
/// batch is drawn independently with replacement.
pub fn draw_step_batches<R: RngCore + ?Sized>(
    n: usize,
    batch_size: usize,
    rng: &mut R,
) -> StepBatches {
    if batch_size >= n {
        let all: Vec<usize> = (0..n).collect();
        return StepBatches {
            outer: all.clone(),
            inner: all.clone(),
            hessian: all,
        };
    }
    if n >= 3 * batch_size {
        let idx = shuffled_indices(n, rng);
        let b = batch_size;
        return StepBatches {
            outer: idx[..b].to_vec(),
            inner: idx[b..2 * b].to_vec(),
            hessian: idx[2 * b..3 * b].to_vec(),
        };
    }
    let draw = |rng: &mut R| {
        (0..batch_size)
            .map(|_| rng.random_range(0..n))
            .collect::<Vec<_>>()
    };
    let outer = draw(rng);
    let inner = draw(rng);
    let hessian = draw(rng);
    StepBatches {
        outer,
        inner,
        hessian,
    }
}

/// Hyper-parameters of a Per-FedAvg local update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerFedAvgParams {
    /// τ
    pub steps: usize,
    pub alpha: f64,
    pub beta: f64,
    pub batch_size: usize,
    pub hvp: HvpBackend,
}

fn check_shard(shard: &DatasetShard) -> Result<(), EngineError> {
    if shard.is_empty() {
        return Err(EngineError::Model(crate::model::ModelError::EmptyBatch));
    }
    Ok(())
}

fn finite(w: ParamVector, what: &str, step: usize) -> Result<ParamVector, EngineError> {
    if w.is_finite() {
        Ok(w)
    } else {
        Err(EngineError::Divergence(format!(
            "{what} iterate became non-finite at step {}",
            step + 1
        )))
    }
}

/// `τ` Per-FedAvg steps from `w_k`:
/// `w̃ = w − α∇f(w, D)`, then `w ← w − β(I − α∇²f(w, D''))∇f(w̃, D')`.
///
/// With `α = 0` the step is computed as plain SGD on `D'`, so the result is
/// bit-identical to [`fedavg_local_update`] under the same random stream.
pub fn perfedavg_local_update<R: RngCore + ?Sized>(
    spec: &ModelSpec,
    w_k: &ParamVector,
    shard: &DatasetShard,
    params: &PerFedAvgParams,
    rng: &mut R,
) -> Result<ParamVector, EngineError> {
    spec.check_params(w_k)?;
    check_shard(shard)?;
    let mut w = w_k.clone();
    for step in 0..params.steps {
        let batches = draw_step_batches(shard.len(), params.batch_size, rng);
        let d_outer = shard.subset(&batches.outer);
        if params.alpha == 0.0 {
            let g = grad(spec, &w, &d_outer)?;
            w = finite(w.axpy(-params.beta, &g)?, "Per-FedAvg", step)?;
            continue;
        }
        let d_inner = shard.subset(&batches.inner);
        let d_hessian = shard.subset(&batches.hessian);
        let g_inner = grad(spec, &w, &d_inner)?;
        let w_tilde = w.axpy(-params.alpha, &g_inner)?;
        let g_outer = grad(spec, &w_tilde, &d_outer)?;
        let h = hvp_with(params.hvp, spec, &w, &g_outer, &d_hessian)?;
        let direction = g_outer.axpy(-params.alpha, &h)?;
        w = finite(w.axpy(-params.beta, &direction)?, "Per-FedAvg", step)?;
    }
    Ok(w)
}

/// `τ` steps of mini-batch SGD from `w_k`, each on the `D'` batch of
/// [`draw_step_batches`].
pub fn fedavg_local_update<R: RngCore + ?Sized>(
    spec: &ModelSpec,
    w_k: &ParamVector,
    shard: &DatasetShard,
    steps: usize,
    beta: f64,
    batch_size: usize,
    rng: &mut R,
) -> Result<ParamVector, EngineError> {
    sgd(spec, w_k, shard, steps, beta, batch_size, rng, "SGD")
}

/// Final personalization: `γ` SGD steps on the user's own shard, with the
/// local learning rate.
pub fn adapt<R: RngCore + ?Sized>(
    spec: &ModelSpec,
    meta_model: &ParamVector,
    shard: &DatasetShard,
    gamma: usize,
    beta: f64,
    batch_size: usize,
    rng: &mut R,
) -> Result<ParamVector, EngineError> {
    sgd(
        spec,
        meta_model,
        shard,
        gamma,
        beta,
        batch_size,
        rng,
        "adaptation",
    )
}

#[allow(clippy::too_many_arguments)]
fn sgd<R: RngCore + ?Sized>(
    spec: &ModelSpec,
    w0: &ParamVector,
    shard: &DatasetShard,
    steps: usize,
    beta: f64,
    batch_size: usize,
    rng: &mut R,
    what: &str,
) -> Result<ParamVector, EngineError> {
    spec.check_params(w0)?;
    check_shard(shard)?;
    let mut w = w0.clone();
    for step in 0..steps {
        let batches = draw_step_batches(shard.len(), batch_size, rng);
        let g = grad(spec, &w, &shard.subset(&batches.outer))?;
        w = finite(w.axpy(-beta, &g)?, what, step)?;
    }
    Ok(w)
}

/// `w_k + Δ / N`, where `Δ` is the sum of the users' model differences.
pub fn server_aggregate(
    w_k: &ParamVector,
    delta_sum: &ParamVector,
    users: usize,
) -> Result<ParamVector, EngineError> {
    if users == 0 {
        return Err(EngineError::Config("cannot average over zero users".into()));
    }
    if w_k.dim() != delta_sum.dim() {
        return Err(EngineError::Numeric(
            crate::numeric::NumericError::Dimension {
                expected: w_k.dim(),
                actual: delta_sum.dim(),
            },
        ));
    }
    let n = users as f64;
    Ok(ParamVector::from_vec_unchecked(
        w_k.iter()
            .zip(delta_sum.iter())
            .map(|(w, d)| w + d / n)
            .collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{loss, ModelSpec};
    use crate::numeric::SeededRng;

    fn quadratic_shard() -> DatasetShard {
        DatasetShard::new(
            "q",
            2,
            vec![1.0, 0.5, -0.3, 2.0, 0.7, -1.1, 1.5, 0.2, -0.8, 0.9],
            vec![1.0, -2.0, 0.5, 3.0, 0.1],
        )
        .unwrap()
    }

    #[test]
    fn batches_disjoint_when_large() {
        let mut rng = SeededRng::new(1, "b");
        let b = draw_step_batches(100, 10, &mut rng);
        let mut all: Vec<usize> = b
            .outer
            .iter()
            .chain(&b.inner)
            .chain(&b.hessian)
            .copied()
            .collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 30);
    }

    #[test]
    fn batches_full_or_replacement() {
        let mut rng = SeededRng::new(1, "b");
        let b = draw_step_batches(5, 8, &mut rng);
        assert_eq!(b.outer, vec![0, 1, 2, 3, 4]);
        assert_eq!(b.outer, b.hessian);
        let b = draw_step_batches(20, 10, &mut rng);
        assert_eq!(
            (b.outer.len(), b.inner.len(), b.hessian.len()),
            (10, 10, 10)
        );
        assert!(b.outer.iter().all(|&i| i < 20));
    }

    #[test]
    fn zero_steps_is_identity() {
        let spec = ModelSpec::linear_regression(2);
        let w = ParamVector::new(vec![0.3, -0.2, 0.1]).unwrap();
        let shard = quadratic_shard();
        let p = PerFedAvgParams {
            steps: 0,
            alpha: 0.1,
            beta: 0.1,
            batch_size: 2,
            hvp: HvpBackend::FiniteDifference,
        };
        let out =
            perfedavg_local_update(&spec, &w, &shard, &p, &mut SeededRng::new(0, "u")).unwrap();
        assert_eq!(out, w);
        let out = adapt(&spec, &w, &shard, 0, 0.1, 2, &mut SeededRng::new(0, "u")).unwrap();
        assert_eq!(out, w);
    }

    #[test]
    fn zero_alpha_reduces_to_sgd() {
        let spec = ModelSpec::logistic_regression(2, 3);
        let shard = DatasetShard::new(
            "c",
            2,
            (0..40).map(|i| ((i * 7 % 11) as f64 - 5.0) / 3.0).collect(),
            (0..20).map(|i| (i % 3) as f64).collect(),
        )
        .unwrap();
        let w = ParamVector::new((0..9).map(|i| i as f64 * 0.01).collect()).unwrap();
        let p = PerFedAvgParams {
            steps: 7,
            alpha: 0.0,
            beta: 0.3,
            batch_size: 4,
            hvp: HvpBackend::FiniteDifference,
        };
        let a = perfedavg_local_update(&spec, &w, &shard, &p, &mut SeededRng::new(5, "u")).unwrap();
        let b =
            fedavg_local_update(&spec, &w, &shard, 7, 0.3, 4, &mut SeededRng::new(5, "u")).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
    }

    #[test]
    fn zero_beta_is_identity() {
        let spec = ModelSpec::linear_regression(2);
        let w = ParamVector::new(vec![0.3, -0.2, 0.1]).unwrap();
        let out = fedavg_local_update(
            &spec,
            &w,
            &quadratic_shard(),
            4,
            0.0,
            2,
            &mut SeededRng::new(0, "u"),
        )
        .unwrap();
        assert_eq!(out, w);
    }

    #[test]
    fn full_batch_sgd_decreases_convex_loss() {
        let spec = ModelSpec::linear_regression(2);
        let shard = quadratic_shard();
        let mut w = ParamVector::zeros(3);
        let mut rng = SeededRng::new(0, "u");
        let mut prev = loss(&spec, &w, &shard).unwrap();
        for _ in 0..50 {
            w = fedavg_local_update(&spec, &w, &shard, 1, 0.05, 64, &mut rng).unwrap();
            let now = loss(&spec, &w, &shard).unwrap();
            assert!(now < prev);
            prev = now;
        }
    }

    #[test]
    fn divergence_is_reported() {
        let spec = ModelSpec::linear_regression(2);
        let shard = quadratic_shard();
        let err = fedavg_local_update(
            &spec,
            &ParamVector::zeros(3),
            &shard,
            2000,
            1e3,
            64,
            &mut SeededRng::new(0, "u"),
        );
        assert!(matches!(err, Err(EngineError::Divergence(_))));
    }

    #[test]
    fn aggregate_examples() {
        let w = ParamVector::new(vec![0.0, 0.0]).unwrap();
        let d = ParamVector::new(vec![2.0, 4.0]).unwrap();
        assert_eq!(server_aggregate(&w, &d, 2).unwrap().as_slice(), &[1.0, 2.0]);
        let w = ParamVector::new(vec![0.3, -1.2]).unwrap();
        assert_eq!(server_aggregate(&w, &ParamVector::zeros(2), 3).unwrap(), w);
        let local = ParamVector::new(vec![0.7, 2.5]).unwrap();
        let delta = local.sub(&w).unwrap();
        assert_eq!(server_aggregate(&w, &delta, 1).unwrap(), local);
        assert!(server_aggregate(&w, &ParamVector::zeros(3), 1).is_err());
    }
}
