use super::{DatasetShard, LayerBlock, LossKind, ModelError, ModelSpec};
use crate::numeric::ParamVector;

/// Layer activations for one input: `acts[0]` is the input, `acts[l]` the
/// tanh output of hidden layer `l`, and the last entry the raw output layer
/// (logits or regression prediction).
fn forward(layers: &[LayerBlock], params: &[f64], x: &[f64]) -> Vec<Vec<f64>> {
    let mut acts = Vec::with_capacity(layers.len() + 1);
    acts.push(x.to_vec());
    for (l, layer) in layers.iter().enumerate() {
        let input = &acts[l];
        let bias = layer.bias(params);
        let mut out: Vec<f64> = (0..layer.outputs)
            .map(|r| {
                let row = layer.weight_row(params, r);
                bias[r] + row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        if l + 1 < layers.len() {
            out.iter_mut().for_each(|v| *v = v.tanh());
        }
        acts.push(out);
    }
    acts
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Loss of a single sample and its derivative with respect to the output
/// layer (`p - onehot` for cross-entropy, `z - y` for squared error).
pub fn output_error(loss: LossKind, outputs: &[f64], target: f64) -> (f64, Vec<f64>) {
    match loss {
        LossKind::SquaredError => {
            let r = outputs[0] - target;
            (0.5 * r * r, vec![r])
        }
        LossKind::CrossEntropy => {
            let class = target as usize;
            let max = outputs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let log_norm = max + outputs.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
            let mut e = softmax(outputs);
            e[class] -= 1.0;
            ((log_norm - outputs[class]).max(0.0), e)
        }
    }
}

/// Accumulates `scale * d loss / d params` for one sample into `out`.
fn backward(
    layers: &[LayerBlock],
    params: &[f64],
    acts: &[Vec<f64>],
    output_delta: Vec<f64>,
    scale: f64,
    out: &mut [f64],
) {
    let mut delta = output_delta;
    for l in (0..layers.len()).rev() {
        let layer = &layers[l];
        let input = &acts[l];
        for (r, d) in delta.iter().enumerate() {
            let start = layer.weight_offset + r * layer.inputs;
            for (g, a) in out[start..start + layer.inputs].iter_mut().zip(input) {
                *g += scale * d * a;
            }
            out[layer.bias_offset + r] += scale * d;
        }
        if l > 0 {
            // Hidden activations are tanh outputs: derivative 1 - a^2.
            delta = (0..layer.inputs)
                .map(|c| {
                    let back: f64 = delta
                        .iter()
                        .enumerate()
                        .map(|(r, d)| layer.weight(params, r, c) * d)
                        .sum();
                    back * (1.0 - input[c] * input[c])
                })
                .collect();
        }
    }
}

fn check(spec: &ModelSpec, w: &ParamVector, batch: &DatasetShard) -> Result<(), ModelError> {
    spec.validate()?;
    spec.check_params(w)?;
    spec.check_batch(batch)
}

/// Mean loss over the batch.
pub fn loss(spec: &ModelSpec, w: &ParamVector, batch: &DatasetShard) -> Result<f64, ModelError> {
    check(spec, w, batch)?;
    let layers = spec.layers();
    let total: f64 = (0..batch.len())
        .map(|i| {
            let acts = forward(&layers, w.as_slice(), batch.row(i));
            output_error(spec.loss, acts.last().unwrap(), batch.target(i)).0
        })
        .sum();
    Ok(total / batch.len() as f64)
}

/// Mean loss and its gradient.
pub fn loss_and_grad(
    spec: &ModelSpec,
    w: &ParamVector,
    batch: &DatasetShard,
) -> Result<(f64, ParamVector), ModelError> {
    check(spec, w, batch)?;
    let layers = spec.layers();
    let scale = 1.0 / batch.len() as f64;
    let mut g = vec![0.0; spec.param_dim()];
    let mut total = 0.0;
    for i in 0..batch.len() {
        let acts = forward(&layers, w.as_slice(), batch.row(i));
        let (l, delta) = output_error(spec.loss, acts.last().unwrap(), batch.target(i));
        total += l;
        backward(&layers, w.as_slice(), &acts, delta, scale, &mut g);
    }
    Ok((total * scale, ParamVector::from_vec_unchecked(g)))
}

/// Gradient of the mean batch loss.
pub fn grad(
    spec: &ModelSpec,
    w: &ParamVector,
    batch: &DatasetShard,
) -> Result<ParamVector, ModelError> {
    loss_and_grad(spec, w, batch).map(|(_, g)| g)
}

/// Raw model outputs (logits or regression prediction) for one input.
pub fn predict(spec: &ModelSpec, w: &ParamVector, x: &[f64]) -> Result<Vec<f64>, ModelError> {
    spec.check_params(w)?;
    if x.len() != spec.input_dim() {
        return Err(ModelError::Dimension {
            expected: spec.input_dim(),
            actual: x.len(),
        });
    }
    Ok(forward(&spec.layers(), w.as_slice(), x).pop().unwrap())
}

/// Arg-max class (ties broken towards the lower index).
pub fn predict_class(spec: &ModelSpec, w: &ParamVector, x: &[f64]) -> Result<usize, ModelError> {
    let logits = predict(spec, w, x)?;
    Ok(logits
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &z)| {
            if z > best.1 {
                (i, z)
            } else {
                best
            }
        })
        .0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::SeededRng;
    use rand::Rng;

    fn random_shard(
        rng: &mut SeededRng,
        n: usize,
        d: usize,
        classes: Option<usize>,
    ) -> DatasetShard {
        let inputs = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let targets = (0..n)
            .map(|_| match classes {
                Some(c) => rng.random_range(0..c) as f64,
                None => rng.random_range(-2.0..2.0),
            })
            .collect();
        DatasetShard::new("u", d, inputs, targets).unwrap()
    }

    fn random_params(rng: &mut SeededRng, spec: &ModelSpec, scale: f64) -> ParamVector {
        ParamVector::new(
            (0..spec.param_dim())
                .map(|_| rng.random_range(-scale..scale))
                .collect(),
        )
        .unwrap()
    }

    // Scalar re-implementation of the logistic loss used as an independent oracle.
    fn logistic_loss_oracle(w: &[f64], batch: &DatasetShard, classes: usize) -> f64 {
        let d = batch.features();
        let mut total = 0.0;
        for i in 0..batch.len() {
            let x = batch.row(i);
            let mut logits = vec![0.0; classes];
            for c in 0..classes {
                let mut z = w[classes * d + c];
                for j in 0..d {
                    z += w[c * d + j] * x[j];
                }
                logits[c] = z;
            }
            let norm: f64 = logits.iter().map(|z| z.exp()).sum::<f64>().ln();
            total += norm - logits[batch.target(i) as usize];
        }
        total / batch.len() as f64
    }

    #[test]
    fn exact_fit_has_zero_loss_and_gradient() {
        let spec = ModelSpec::linear_regression(2);
        let w = ParamVector::new(vec![1.5, -0.5, 0.25]).unwrap();
        let xs = [0.3, 1.0, -2.0, 0.5, 1.0, 1.0];
        let targets = xs
            .chunks(2)
            .map(|x| 1.5 * x[0] - 0.5 * x[1] + 0.25)
            .collect();
        let batch = DatasetShard::new("u", 2, xs.to_vec(), targets).unwrap();
        assert!(loss(&spec, &w, &batch).unwrap() < 1e-30);
        assert!(grad(&spec, &w, &batch).unwrap().norm_inf() < 1e-15);
    }

    #[test]
    fn uniform_logits_give_ln2() {
        let spec = ModelSpec::logistic_regression(3, 2);
        let w = ParamVector::zeros(spec.param_dim());
        let batch = DatasetShard::new("u", 3, vec![1.0, 2.0, 3.0], vec![1.0]).unwrap();
        let l = loss(&spec, &w, &batch).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn logistic_loss_matches_scalar_oracle() {
        let mut rng = SeededRng::new(1, "oracle");
        let spec = ModelSpec::logistic_regression(4, 3);
        let batch = random_shard(&mut rng, 20, 4, Some(3));
        let w = random_params(&mut rng, &spec, 1.0);
        let ours = loss(&spec, &w, &batch).unwrap();
        let oracle = logistic_loss_oracle(w.as_slice(), &batch, 3);
        assert!((ours - oracle).abs() < 1e-10, "{ours} vs {oracle}");
    }

    #[test]
    fn duplicated_sample_has_same_gradient() {
        let mut rng = SeededRng::new(2, "dup");
        let spec = ModelSpec::mlp(vec![3, 4, 2], LossKind::CrossEntropy);
        let one = random_shard(&mut rng, 1, 3, Some(2));
        let two = one.subset(&[0, 0]);
        let w = random_params(&mut rng, &spec, 0.5);
        assert_eq!(
            grad(&spec, &w, &one).unwrap(),
            grad(&spec, &w, &two).unwrap()
        );
    }

    #[test]
    fn dimension_errors() {
        let spec = ModelSpec::linear_regression(2);
        let batch = DatasetShard::new("u", 2, vec![1.0, 2.0], vec![0.0]).unwrap();
        assert!(matches!(
            loss(&spec, &ParamVector::zeros(2), &batch),
            Err(ModelError::Dimension { .. })
        ));
        let wrong = DatasetShard::new("u", 3, vec![1.0, 2.0, 3.0], vec![0.0]).unwrap();
        assert!(grad(&spec, &ParamVector::zeros(3), &wrong).is_err());
    }

    #[test]
    fn final_layer_rows_single_out_true_class() {
        // Exactly one final-layer row of a single-sample cross-entropy gradient
        // points against the sample's activation direction.
        let mut rng = SeededRng::new(4, "rows");
        for spec in [
            ModelSpec::logistic_regression(5, 4),
            ModelSpec::mlp(vec![5, 6, 4], LossKind::CrossEntropy),
        ] {
            for _ in 0..50 {
                let sample = random_shard(&mut rng, 1, 5, Some(4));
                let w = random_params(&mut rng, &spec, 0.7);
                let g = grad(&spec, &w, &sample).unwrap();
                let layers = spec.layers();
                let acts = forward(&layers, w.as_slice(), sample.row(0));
                let activation = &acts[acts.len() - 2];
                let last = spec.final_layer();
                let negative: Vec<usize> = (0..last.outputs)
                    .filter(|&r| {
                        let row = last.weight_row(g.as_slice(), r);
                        row.iter().zip(activation).map(|(a, b)| a * b).sum::<f64>() < 0.0
                    })
                    .collect();
                assert_eq!(negative, vec![sample.target(0) as usize]);
            }
        }
    }
}
