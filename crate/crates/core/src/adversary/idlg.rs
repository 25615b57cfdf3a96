use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::{AdversaryError, AttackTarget};
use crate::model::{grad, output_error, predict, DatasetShard, LossKind, ModelKind, ModelSpec};
use crate::numeric::{gaussian_vector, ParamVector};

/// Relative tolerance when checking that final-layer rows are parallel.
const RANK_ONE_TOL: f64 = 1e-6;

/// Recovers the class of a single-sample cross-entropy gradient.
///
/// For one sample, final-layer row `c` of the gradient is `e_c · h` and its
/// bias entry is `e_c`, where `h` is the last hidden activation (the input
/// for logistic regression) and `e = softmax(z) - onehot(y)`. Only the true
/// class has `e_c < 0`, so it is the one row pointing against `h`. Rows that
/// are not all parallel, or anything other than exactly one negative
/// coefficient, means the gradient did not come from a single sample.
pub fn extract_label(gradient: &ParamVector, spec: &ModelSpec) -> Result<usize, AdversaryError> {
    if spec.loss != LossKind::CrossEntropy {
        return Err(AdversaryError::Argument(
            "label extraction needs a cross-entropy classifier".into(),
        ));
    }
    spec.check_params(gradient)?;
    let layer = spec.final_layer();
    let g = gradient.as_slice();
    let bias = layer.bias(g);
    let scale = g[layer.weight_offset..layer.end()]
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let bias_scale = bias.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || bias_scale == 0.0 {
        return Err(AdversaryError::Ambiguity("gradient is zero".into()));
    }

    // Shared activation direction, taken from the row with the largest
    // coefficient, then every row must equal e_c times it.
    let pivot = (0..layer.outputs)
        .max_by(|&a, &b| bias[a].abs().total_cmp(&bias[b].abs()))
        .expect("at least one output");
    let h: Vec<f64> = layer
        .weight_row(g, pivot)
        .iter()
        .map(|v| v / bias[pivot])
        .collect();
    for c in 0..layer.outputs {
        let row = layer.weight_row(g, c);
        for (r, hj) in row.iter().zip(&h) {
            if (r - bias[c] * hj).abs() > RANK_ONE_TOL * scale {
                return Err(AdversaryError::Ambiguity(
                    "final-layer rows are not parallel (more than one sample?)".into(),
                ));
            }
        }
    }
    let tiny = RANK_ONE_TOL * bias_scale;
    let negative: Vec<usize> = (0..layer.outputs).filter(|&c| bias[c] < -tiny).collect();
    match negative.as_slice() {
        [c] => Ok(*c),
        [] => Err(AdversaryError::Ambiguity(
            "no row points against the activation".into(),
        )),
        _ => Err(AdversaryError::Ambiguity(format!(
            "{} rows point against the activation",
            negative.len()
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackOptions {
    pub iterations: usize,
    pub eta: f64,
    /// Stop once the gradient-matching loss falls to this value.
    pub tolerance: f64,
    /// How many times a step size may be halved when a step would increase
    /// the loss.
    pub max_halvings: u32,
    /// Keep a copy of the dummy data every this many iterations.
    pub snapshot_every: Option<usize>,
}

impl Default for AttackOptions {
    fn default() -> Self {
        Self {
            iterations: 5000,
            eta: 0.1,
            tolerance: 1e-20,
            max_halvings: 20,
            snapshot_every: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub iteration: usize,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub dummy_data: Vec<f64>,
    pub dummy_label: usize,
    /// False when the label came from the fallback rule because the
    /// gradient was not a single-sample gradient.
    pub label_exact: bool,
    /// Gradient-matching loss at the start of every iteration run.
    pub loss_curve: Vec<f64>,
    /// Against the best-matching candidate; `None` without candidates.
    pub reconstruction_mse: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub snapshots: Vec<Snapshot>,
}

/// `‖∇W(x, label) − G‖²`: squared distance between the parameter gradient of
/// the single sample `(x, label)` at `w` and the observed gradient `G`.
pub fn gradient_loss(
    spec: &ModelSpec,
    w: &ParamVector,
    observed: &ParamVector,
    x: &[f64],
    label: usize,
) -> Result<f64, AdversaryError> {
    let sample = DatasetShard::new("dummy", x.len(), x.to_vec(), vec![label as f64])?;
    let g = grad(spec, w, &sample)?;
    Ok(g.iter()
        .zip(observed.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum())
}

/// Gradient of [`gradient_loss`] with respect to `x`.
fn gradient_loss_grad(
    spec: &ModelSpec,
    w: &ParamVector,
    observed: &ParamVector,
    x: &[f64],
    label: usize,
) -> Result<Vec<f64>, AdversaryError> {
    if spec.kind != ModelKind::Mlp {
        return single_layer_grad(spec, w, observed, x, label);
    }
    let step = 1e-6;
    let mut out = Vec::with_capacity(x.len());
    let mut probe = x.to_vec();
    for j in 0..x.len() {
        let h = step * (1.0 + x[j].abs());
        probe[j] = x[j] + h;
        let up = gradient_loss(spec, w, observed, &probe, label)?;
        probe[j] = x[j] - h;
        let down = gradient_loss(spec, w, observed, &probe, label)?;
        probe[j] = x[j];
        out.push((up - down) / (2.0 * h));
    }
    Ok(out)
}

/// Closed form for `z = Wx + b` with output error `e(z)` and curvature
/// `A = de/dz`:
///
/// `L = Σ_c ‖e_c x − G_c‖² + Σ_c (e_c − g_c)²`, so
/// `dL/dx = 2 Σ_c e_c (e_c x − G_c) + Wᵀ A r` with
/// `r_c = 2 (e_c x − G_c)·x + 2 (e_c − g_c)`.
fn single_layer_grad(
    spec: &ModelSpec,
    w: &ParamVector,
    observed: &ParamVector,
    x: &[f64],
    label: usize,
) -> Result<Vec<f64>, AdversaryError> {
    let layer = spec.final_layer();
    let z = predict(spec, w, x)?;
    let (_, e) = output_error(spec.loss, &z, label as f64);
    let g = observed.as_slice();
    let gb = layer.bias(g);
    let d = x.len();
    let mut out = vec![0.0; d];
    let mut r = vec![0.0; layer.outputs];
    for c in 0..layer.outputs {
        let gc = layer.weight_row(g, c);
        let mut dot = 0.0;
        for j in 0..d {
            let resid = e[c] * x[j] - gc[j];
            out[j] += 2.0 * e[c] * resid;
            dot += resid * x[j];
        }
        r[c] = 2.0 * dot + 2.0 * (e[c] - gb[c]);
    }
    let ar: Vec<f64> = match spec.loss {
        LossKind::SquaredError => r,
        LossKind::CrossEntropy => {
            // A = diag(p) − ppᵀ with p = e + onehot(label).
            let mut p = e.clone();
            p[label] += 1.0;
            let pr: f64 = p.iter().zip(&r).map(|(a, b)| a * b).sum();
            p.iter().zip(&r).map(|(pc, rc)| pc * (rc - pr)).collect()
        }
    };
    let params = w.as_slice();
    for (c, arc) in ar.iter().enumerate() {
        for (o, wcj) in out.iter_mut().zip(layer.weight_row(params, c)) {
            *o += arc * wcj;
        }
    }
    Ok(out)
}

/// iDLG: recover the label from gradient signs, then fit dummy data by
/// gradient descent on the gradient-matching loss.
///
/// A step that would raise the loss is retried with half the step size, up
/// to `max_halvings` times; the reduced step size is kept. The loss curve is
/// therefore non-increasing. If no reduced step helps, the attack stops.
/// When the observed gradient is not a single-sample gradient, the label
/// falls back to the class with the most negative bias gradient.
pub fn idlg_attack<R: RngCore + ?Sized>(
    target: &AttackTarget,
    options: &AttackOptions,
    rng: &mut R,
) -> Result<AttackResult, AdversaryError> {
    let d = target.model_spec.input_dim();
    let x0 =
        gaussian_vector(d, 0.0, 1.0, rng).map_err(|e| AdversaryError::Argument(e.to_string()))?;
    idlg_attack_from(target, options, x0.into_vec())
}

/// [`idlg_attack`] from a caller-chosen starting point.
pub fn idlg_attack_from(
    target: &AttackTarget,
    options: &AttackOptions,
    start: Vec<f64>,
) -> Result<AttackResult, AdversaryError> {
    if options.iterations == 0 {
        return Err(AdversaryError::Argument(
            "iterations must be at least 1".into(),
        ));
    }
    if !(options.eta > 0.0 && options.eta.is_finite()) {
        return Err(AdversaryError::Argument(format!(
            "eta must be positive, got {}",
            options.eta
        )));
    }
    let spec = &target.model_spec;
    if start.len() != spec.input_dim() {
        return Err(AdversaryError::Argument(format!(
            "dummy data has {} features, model expects {}",
            start.len(),
            spec.input_dim()
        )));
    }
    let (label, label_exact) = match extract_label(&target.observed_gradient, spec) {
        Ok(c) => (c, true),
        Err(AdversaryError::Ambiguity(_)) => {
            (fallback_label(&target.observed_gradient, spec), false)
        }
        Err(e) => return Err(e),
    };

    let w = &target.server_weights;
    let observed = &target.observed_gradient;
    let mut x = start;
    let mut eta = options.eta;
    let mut current = gradient_loss(spec, w, observed, &x, label)?;
    if !current.is_finite() {
        return Err(AdversaryError::NonFinite(
            "initial gradient-matching loss".into(),
        ));
    }
    let mut loss_curve = Vec::new();
    let mut snapshots = Vec::new();
    for iteration in 0..options.iterations {
        loss_curve.push(current);
        if let Some(every) = options.snapshot_every {
            if every > 0 && iteration % every == 0 {
                snapshots.push(Snapshot {
                    iteration,
                    data: x.clone(),
                });
            }
        }
        if current <= options.tolerance {
            break;
        }
        let g = gradient_loss_grad(spec, w, observed, &x, label)?;
        let mut accepted = None;
        for _ in 0..=options.max_halvings {
            let candidate: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - eta * gi).collect();
            let value = gradient_loss(spec, w, observed, &candidate, label)?;
            if value.is_finite() && value <= current {
                accepted = Some((candidate, value));
                break;
            }
            eta *= 0.5;
        }
        match accepted {
            Some((next, value)) => {
                x = next;
                current = value;
            }
            None => break,
        }
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(AdversaryError::NonFinite("dummy data".into()));
    }
    let reconstruction_mse = target.best_mse(&x);
    Ok(AttackResult {
        dummy_data: x,
        dummy_label: label,
        label_exact,
        loss_curve,
        reconstruction_mse,
        snapshots,
    })
}

fn fallback_label(gradient: &ParamVector, spec: &ModelSpec) -> usize {
    let bias = spec.final_layer().bias(gradient.as_slice()).to_vec();
    (0..bias.len())
        .min_by(|&a, &b| bias[a].total_cmp(&bias[b]))
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::Provenance;
    use crate::numeric::SeededRng;
    use rand::Rng;

    fn single(spec: &ModelSpec, w: &ParamVector, x: &[f64], y: usize) -> ParamVector {
        let s = DatasetShard::new("s", x.len(), x.to_vec(), vec![y as f64]).unwrap();
        grad(spec, w, &s).unwrap()
    }

    fn random_w(spec: &ModelSpec, rng: &mut SeededRng) -> ParamVector {
        gaussian_vector(spec.param_dim(), 0.0, 0.5, rng).unwrap()
    }

    #[test]
    fn label_from_single_sample() {
        let mut rng = SeededRng::new(3, "label");
        for classes in [2, 5, 10] {
            let spec = ModelSpec::logistic_regression(6, classes);
            for _ in 0..50 {
                let w = random_w(&spec, &mut rng);
                let x = gaussian_vector(6, 0.0, 1.0, &mut rng).unwrap();
                let y = rng.random_range(0..classes);
                assert_eq!(
                    extract_label(&single(&spec, &w, x.as_slice(), y), &spec).unwrap(),
                    y
                );
            }
        }
    }

    #[test]
    fn two_samples_or_zero_are_ambiguous() {
        let spec = ModelSpec::logistic_regression(3, 3);
        let w = ParamVector::zeros(spec.param_dim());
        let batch = DatasetShard::new("b", 3, vec![1.0, 0.5, -0.2, -0.3, 0.8, 1.1], vec![0.0, 2.0])
            .unwrap();
        let g = grad(&spec, &w, &batch).unwrap();
        assert!(matches!(
            extract_label(&g, &spec),
            Err(AdversaryError::Ambiguity(_))
        ));
        let zero = ParamVector::zeros(spec.param_dim());
        assert!(matches!(
            extract_label(&zero, &spec),
            Err(AdversaryError::Ambiguity(_))
        ));
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let mut rng = SeededRng::new(8, "fd");
        for spec in [
            ModelSpec::logistic_regression(5, 3),
            ModelSpec::linear_regression(5),
        ] {
            let w = random_w(&spec, &mut rng);
            let observed = random_w(&spec, &mut rng).scale(0.2);
            let x = gaussian_vector(5, 0.0, 1.0, &mut rng).unwrap().into_vec();
            let label = if spec.is_classifier() { 1 } else { 0 };
            let analytic = single_layer_grad(&spec, &w, &observed, &x, label).unwrap();
            for j in 0..5 {
                let h = 1e-6;
                let mut up = x.clone();
                up[j] += h;
                let mut down = x.clone();
                down[j] -= h;
                let fd = (gradient_loss(&spec, &w, &observed, &up, label).unwrap()
                    - gradient_loss(&spec, &w, &observed, &down, label).unwrap())
                    / (2.0 * h);
                assert!(
                    (fd - analytic[j]).abs() <= 1e-6 * (1.0 + fd.abs()),
                    "{spec:?} {j}: {fd} vs {}",
                    analytic[j]
                );
            }
        }
    }

    #[test]
    fn starting_at_the_truth_stops_immediately() {
        let spec = ModelSpec::logistic_regression(4, 3);
        let mut rng = SeededRng::new(2, "t");
        let w = random_w(&spec, &mut rng);
        let x = vec![0.5, -1.0, 0.25, 2.0];
        let g = single(&spec, &w, &x, 2);
        let target = AttackTarget::new(g, Provenance::FedavgUserUpload, spec, w)
            .unwrap()
            .with_candidates(vec![x.clone()]);
        let r = idlg_attack_from(&target, &AttackOptions::default(), x).unwrap();
        assert_eq!(r.loss_curve, vec![0.0]);
        assert_eq!(r.reconstruction_mse, Some(0.0));
        assert!(r.label_exact);
    }

    #[test]
    fn mlp_attack_curve_is_monotone() {
        let spec = ModelSpec::mlp(vec![4, 6, 3], LossKind::CrossEntropy);
        let mut rng = SeededRng::new(4, "mlp");
        let w = random_w(&spec, &mut rng);
        let x = vec![0.3, -0.7, 1.2, 0.1];
        let g = single(&spec, &w, &x, 1);
        assert_eq!(extract_label(&g, &spec).unwrap(), 1);
        let target = AttackTarget::new(g, Provenance::FedavgUserUpload, spec, w)
            .unwrap()
            .with_candidates(vec![x]);
        let options = AttackOptions {
            iterations: 300,
            ..AttackOptions::default()
        };
        let r = idlg_attack(&target, &options, &mut rng).unwrap();
        assert!(r.loss_curve.windows(2).all(|p| p[1] <= p[0]));
        assert!(r.loss_curve.last().unwrap() < &r.loss_curve[0]);
    }

    #[test]
    fn bad_options_rejected() {
        let spec = ModelSpec::logistic_regression(2, 2);
        let w = ParamVector::zeros(6);
        let target =
            AttackTarget::new(ParamVector::zeros(6), Provenance::FedavgUserUpload, spec, w)
                .unwrap();
        let mut rng = SeededRng::new(0, "x");
        for options in [
            AttackOptions {
                iterations: 0,
                ..AttackOptions::default()
            },
            AttackOptions {
                eta: 0.0,
                ..AttackOptions::default()
            },
        ] {
            assert!(matches!(
                idlg_attack(&target, &options, &mut rng),
                Err(AdversaryError::Argument(_))
            ));
        }
    }
}
