#![allow(dead_code)]

use fedring_core::model::{DatasetShard, LossKind, ModelSpec};
use fedring_core::{ParamVector, SeededRng};
use rand::Rng;

pub fn rng(label: &str) -> SeededRng {
    SeededRng::new(20_26, label)
}

pub fn normal(rng: &mut SeededRng, n: usize, sigma: f64) -> Vec<f64> {
    let dist = rand_distr::Normal::new(0.0, sigma).unwrap();
    (0..n).map(|_| rng.sample(dist)).collect()
}

pub fn random_params(spec: &ModelSpec, rng: &mut SeededRng, sigma: f64) -> ParamVector {
    ParamVector::new(normal(rng, spec.param_dim(), sigma)).unwrap()
}

/// `n` Gaussian rows with targets that suit the model's loss.
pub fn random_shard(spec: &ModelSpec, rng: &mut SeededRng, n: usize) -> DatasetShard {
    let d = spec.input_dim();
    let inputs = normal(rng, n * d, 1.0);
    let targets = (0..n)
        .map(|_| match spec.loss {
            LossKind::SquaredError => rng.random_range(-2.0..2.0),
            LossKind::CrossEntropy => rng.random_range(0..spec.output_dim()) as f64,
        })
        .collect();
    DatasetShard::new("u", d, inputs, targets).unwrap()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `‖a − b‖ / ‖b‖`, with a floor on the denominator.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(b).max(1e-12)
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Least-squares weights and bias for `y ≈ wᵀx + b`, in the linear model's
/// parameter layout.
pub fn least_squares(shard: &DatasetShard) -> ParamVector {
    let d = shard.features();
    let rows: Vec<Vec<f64>> = (0..shard.len())
        .map(|i| {
            let mut r = shard.row(i).to_vec();
            r.push(1.0);
            r
        })
        .collect();
    let mut ata = vec![vec![0.0; d + 1]; d + 1];
    let mut atb = vec![0.0; d + 1];
    for (r, y) in rows.iter().zip(shard.targets()) {
        for i in 0..=d {
            atb[i] += r[i] * y;
            for j in 0..=d {
                ata[i][j] += r[i] * r[j];
            }
        }
    }
    ParamVector::new(solve(ata, atb)).unwrap()
}

/// `½ mean (wᵀx + b − y)²`, written out independently of the model code.
pub fn squared_loss(w: &ParamVector, shard: &DatasetShard) -> f64 {
    let d = shard.features();
    let w = w.as_slice();
    let total: f64 = (0..shard.len())
        .map(|i| {
            let pred: f64 = shard
                .row(i)
                .iter()
                .zip(&w[..d])
                .map(|(x, a)| x * a)
                .sum::<f64>()
                + w[d];
            0.5 * (pred - shard.target(i)).powi(2)
        })
        .sum();
    total / shard.len() as f64
}
