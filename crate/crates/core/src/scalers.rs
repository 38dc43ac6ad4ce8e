//! Post-hoc scaling calibrators: temperature, vector and matrix scaling.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::metrics::{self, PredictionBatch, Targets};
use crate::numerics::{self, argmax, minimize_scalar, Label, Matrix};

/// Lower bound of the temperature search.
pub const T_MIN: f64 = 0.05;
/// Upper bound of the temperature search.
pub const T_MAX: f64 = 20.0;
/// Bracket width at which the temperature search stops.
pub const T_TOL: f64 = 1e-4;

/// Gradient-descent settings for vector and matrix scaling.
pub const GD_STEP: f64 = 0.01;
pub const GD_MAX_ITERS: usize = 2000;
pub const GD_GRAD_TOL: f64 = 1e-6;

/// A fitted transform applied to logits before the softmax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Calibrator {
    Identity,
    /// `z / temperature`
    Temperature {
        temperature: f64,
    },
    /// `z * scale + bias`, elementwise.
    Vector {
        scale: Vec<f64>,
        bias: Vec<f64>,
        /// False when gradient descent hit its iteration cap.
        converged: bool,
    },
    /// `weight · z + bias`
    Matrix {
        weight: Matrix,
        bias: Vec<f64>,
        converged: bool,
    },
}

impl Calibrator {
    pub fn temperature(t: f64) -> Result<Self> {
        let c = Calibrator::Temperature { temperature: t };
        c.validate()?;
        Ok(c)
    }

    /// Fitted temperature, for temperature-kind calibrators.
    pub fn fitted_temperature(&self) -> Option<f64> {
        match self {
            Calibrator::Temperature { temperature } => Some(*temperature),
            _ => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Calibrator::Identity => "identity",
            Calibrator::Temperature { .. } => "temperature",
            Calibrator::Vector { .. } => "vector",
            Calibrator::Matrix { .. } => "matrix",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Calibrator::Identity => Ok(()),
            Calibrator::Temperature { temperature: t } => {
                if (T_MIN..=T_MAX).contains(t) {
                    Ok(())
                } else {
                    Err(invalid(format!(
                        "temperature {t} outside [{T_MIN}, {T_MAX}]"
                    )))
                }
            }
            Calibrator::Vector { scale, bias, .. } => {
                if scale.len() != bias.len() {
                    return Err(invalid("vector calibrator scale and bias lengths differ"));
                }
                if scale.iter().chain(bias).any(|v| !v.is_finite()) {
                    return Err(invalid("vector calibrator has non-finite parameters"));
                }
                Ok(())
            }
            Calibrator::Matrix { weight, bias, .. } => {
                if weight.rows() != weight.cols() || weight.rows() != bias.len() {
                    return Err(invalid(
                        "matrix calibrator must be square with matching bias",
                    ));
                }
                if !weight.is_finite() || bias.iter().any(|v| !v.is_finite()) {
                    return Err(invalid("matrix calibrator has non-finite parameters"));
                }
                Ok(())
            }
        }
    }

    fn num_classes(&self) -> Option<usize> {
        match self {
            Calibrator::Identity | Calibrator::Temperature { .. } => None,
            Calibrator::Vector { scale, .. } => Some(scale.len()),
            Calibrator::Matrix { bias, .. } => Some(bias.len()),
        }
    }

    /// Transforms a logit matrix; dimensions must already be checked.
    fn transform(&self, logits: &Matrix) -> Matrix {
        match self {
            Calibrator::Identity => logits.clone(),
            Calibrator::Temperature { temperature } => logits.map(|v| v / temperature),
            Calibrator::Vector { scale, bias, .. } => {
                let mut out = logits.clone();
                for i in 0..out.rows() {
                    for ((v, s), b) in out.row_mut(i).iter_mut().zip(scale).zip(bias) {
                        *v = *v * s + b;
                    }
                }
                out
            }
            Calibrator::Matrix { weight, bias, .. } => {
                let c = bias.len();
                let mut out = Matrix::zeros(logits.rows(), c);
                for i in 0..logits.rows() {
                    let z = logits.row(i);
                    for (k, o) in out.row_mut(i).iter_mut().enumerate() {
                        *o = bias[k] + weight.row(k).iter().zip(z).map(|(w, x)| w * x).sum::<f64>();
                    }
                }
                out
            }
        }
    }
}

/// Applies `cal` to the batch's logits, carrying labels through.
pub fn apply(cal: &Calibrator, batch: &PredictionBatch) -> Result<PredictionBatch> {
    cal.validate()?;
    if let Some(c) = cal.num_classes() {
        if c != batch.num_classes() {
            return Err(invalid(format!(
                "calibrator has {c} classes, batch has {}",
                batch.num_classes()
            )));
        }
    }
    batch.with_logits(cal.transform(batch.logits()))
}

/// Mean NLL of `softmax(z / t)` against the batch labels.
pub fn temperature_nll(batch: &PredictionBatch, t: f64) -> Result<f64> {
    batch.require_targets()?;
    Ok(temperature_nll_unchecked(batch, t))
}

fn temperature_nll_unchecked(batch: &PredictionBatch, t: f64) -> f64 {
    let mut buf = vec![0.0; batch.num_classes()];
    let mut total = 0.0;
    for i in 0..batch.len() {
        numerics::tempered_softmax_into(batch.logits().row(i), t, &mut buf);
        total += numerics::nll_unchecked(&buf, batch.label(i).expect("labels checked"));
    }
    total / batch.len() as f64
}

/// Temperature in `[T_MIN, T_MAX]` minimizing mean NLL on the batch.
pub fn fit_temperature_value(batch: &PredictionBatch) -> Result<f64> {
    batch.require_targets()?;
    let best = minimize_scalar(|t| temperature_nll_unchecked(batch, t), T_MIN, T_MAX, T_TOL)?;
    Ok(best.x)
}

/// Temperature scaling fitted on labeled (hard or soft) data.
pub fn fit_temperature(batch: &PredictionBatch) -> Result<Calibrator> {
    Ok(Calibrator::Temperature {
        temperature: fit_temperature_value(batch)?,
    })
}

/// Temperature scaling fitted against true target labels: the upper-bound
/// reference that source-free methods try to approach.
pub fn fit_oracle(batch: &PredictionBatch) -> Result<Calibrator> {
    fit_temperature(batch)
}

/// Mean NLL at a fixed temperature, split into correctly and wrongly
/// predicted samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NllDecomposition {
    pub total: f64,
    /// Mean NLL over correct predictions, zero when there are none.
    pub correct_term: f64,
    /// Mean NLL over wrong predictions, zero when there are none.
    pub wrong_term: f64,
    pub n_correct: usize,
    pub n_wrong: usize,
}

impl NllDecomposition {
    /// `(N_c / N) * correct_term + (N_w / N) * wrong_term`
    pub fn weighted_sum(&self) -> f64 {
        let n = (self.n_correct + self.n_wrong) as f64;
        self.n_correct as f64 / n * self.correct_term + self.n_wrong as f64 / n * self.wrong_term
    }
}

/// Splits the temperature-scaled NLL by prediction correctness. For soft
/// labels a prediction counts as correct when it matches the label's argmax.
pub fn nll_decomposition(batch: &PredictionBatch, t: f64) -> Result<NllDecomposition> {
    batch.require_targets()?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(invalid(format!("temperature must be positive, got {t}")));
    }
    let mut buf = vec![0.0; batch.num_classes()];
    let (mut sum_c, mut sum_w, mut n_c, mut n_w) = (0.0, 0.0, 0usize, 0usize);
    for i in 0..batch.len() {
        let z = batch.logits().row(i);
        let y = batch.label(i).expect("labels checked");
        numerics::tempered_softmax_into(z, t, &mut buf);
        let loss = numerics::nll_unchecked(&buf, y);
        let label_class = match y {
            Label::Hard(c) => c,
            Label::Soft(s) => argmax(s),
        };
        if argmax(z) == label_class {
            sum_c += loss;
            n_c += 1;
        } else {
            sum_w += loss;
            n_w += 1;
        }
    }
    let n = batch.len() as f64;
    let mean = |s: f64, k: usize| if k == 0 { 0.0 } else { s / k as f64 };
    Ok(NllDecomposition {
        total: (sum_c + sum_w) / n,
        correct_term: mean(sum_c, n_c),
        wrong_term: mean(sum_w, n_w),
        n_correct: n_c,
        n_wrong: n_w,
    })
}

/// Target distribution of sample `i` as a dense vector.
fn target_row(batch: &PredictionBatch, i: usize, out: &mut [f64]) {
    match batch.targets().expect("labels checked") {
        Targets::Hard(l) => {
            out.fill(0.0);
            out[l[i]] = 1.0;
        }
        Targets::Soft(s) => out.copy_from_slice(s.row(i)),
    }
}

/// Backtracking gradient descent: each iteration starts from `GD_STEP`
/// and halves the step until the loss does not increase.
fn descend<L, G>(mut params: Vec<f64>, loss: L, grad: G) -> (Vec<f64>, bool)
where
    L: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    let mut current = loss(&params);
    for _ in 0..GD_MAX_ITERS {
        let g = grad(&params);
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < GD_GRAD_TOL {
            return (params, true);
        }
        let mut step = GD_STEP;
        let mut accepted = false;
        for _ in 0..40 {
            let cand: Vec<f64> = params.iter().zip(&g).map(|(p, d)| p - step * d).collect();
            let l = loss(&cand);
            if l.is_finite() && l <= current {
                params = cand;
                current = l;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // no descent direction left at floating-point resolution
            return (params, true);
        }
    }
    (params, false)
}

fn vector_from(params: &[f64], c: usize, converged: bool) -> Calibrator {
    Calibrator::Vector {
        scale: params[..c].to_vec(),
        bias: params[c..].to_vec(),
        converged,
    }
}

fn matrix_from(params: &[f64], c: usize, converged: bool) -> Calibrator {
    Calibrator::Matrix {
        weight: Matrix::from_vec(c, c, params[..c * c].to_vec()).expect("c*c parameters"),
        bias: params[c * c..].to_vec(),
        converged,
    }
}

fn nll_of(cal: &Calibrator, batch: &PredictionBatch) -> f64 {
    match batch.with_logits(cal.transform(batch.logits())) {
        Ok(b) => metrics::mean_nll(&b).unwrap_or(f64::INFINITY),
        // non-finite transformed logits
        Err(_) => f64::INFINITY,
    }
}

/// Vector scaling. Descent starts from the fitted temperature
/// (`scale = 1/T`, `bias = 0`), so its NLL never exceeds temperature scaling's.
pub fn fit_vector(batch: &PredictionBatch) -> Result<Calibrator> {
    batch.require_targets()?;
    let c = batch.num_classes();
    let t = fit_temperature_value(batch)?;
    let mut init = vec![1.0 / t; c];
    init.extend(std::iter::repeat_n(0.0, c));

    let grad = |p: &[f64]| {
        let (scale, bias) = p.split_at(c);
        let mut g = vec![0.0; 2 * c];
        let mut z = vec![0.0; c];
        let mut prob = vec![0.0; c];
        let mut y = vec![0.0; c];
        for i in 0..batch.len() {
            let raw = batch.logits().row(i);
            for k in 0..c {
                z[k] = raw[k] * scale[k] + bias[k];
            }
            numerics::softmax_into(&z, &mut prob);
            target_row(batch, i, &mut y);
            for k in 0..c {
                let d = prob[k] - y[k];
                g[k] += d * raw[k];
                g[c + k] += d;
            }
        }
        let n = batch.len() as f64;
        g.iter_mut().for_each(|v| *v /= n);
        g
    };
    let (params, converged) = descend(init, |p| nll_of(&vector_from(p, c, true), batch), grad);
    Ok(vector_from(&params, c, converged))
}

/// Matrix scaling. Descent starts from the fitted vector-scaling solution
/// placed on the diagonal, so its NLL never exceeds vector scaling's.
pub fn fit_matrix(batch: &PredictionBatch) -> Result<Calibrator> {
    let c = batch.num_classes();
    let mut init = vec![0.0; c * c + c];
    match fit_vector(batch)? {
        Calibrator::Vector { scale, bias, .. } => {
            for k in 0..c {
                init[k * c + k] = scale[k];
                init[c * c + k] = bias[k];
            }
        }
        other => unreachable!("fit_vector returned {}", other.kind()),
    }

    let grad = |p: &[f64]| {
        let (w, bias) = p.split_at(c * c);
        let mut g = vec![0.0; c * c + c];
        let mut z = vec![0.0; c];
        let mut prob = vec![0.0; c];
        let mut y = vec![0.0; c];
        for i in 0..batch.len() {
            let raw = batch.logits().row(i);
            for k in 0..c {
                z[k] = bias[k] + (0..c).map(|j| w[k * c + j] * raw[j]).sum::<f64>();
            }
            numerics::softmax_into(&z, &mut prob);
            target_row(batch, i, &mut y);
            for k in 0..c {
                let d = prob[k] - y[k];
                for j in 0..c {
                    g[k * c + j] += d * raw[j];
                }
                g[c * c + k] += d;
            }
        }
        let n = batch.len() as f64;
        g.iter_mut().for_each(|v| *v /= n);
        g
    };
    let (params, converged) = descend(init, |p| nll_of(&matrix_from(p, c, true), batch), grad);
    Ok(matrix_from(&params, c, converged))
}

#[derive(Serialize, Deserialize)]
struct CalibratorDocument {
    schema_version: u32,
    calibrator: Calibrator,
}

/// Current version of the calibrator JSON document.
pub const CALIBRATOR_SCHEMA_VERSION: u32 = 1;

impl Calibrator {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&CalibratorDocument {
            schema_version: CALIBRATOR_SCHEMA_VERSION,
            calibrator: self.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: CalibratorDocument = serde_json::from_str(text)?;
        if doc.schema_version != CALIBRATOR_SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                found: doc.schema_version,
                expected: CALIBRATOR_SCHEMA_VERSION,
            });
        }
        doc.calibrator.validate()?;
        Ok(doc.calibrator)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn batch(rows: &[[f64; 2]], labels: &[usize]) -> PredictionBatch {
        PredictionBatch::new(Matrix::from_rows(rows).unwrap(), Some(labels.to_vec())).unwrap()
    }

    #[test]
    fn identity_is_a_no_op() {
        let b = batch(&[[2.0, 0.0], [0.5, 1.0]], &[0, 0]);
        assert_eq!(apply(&Calibrator::Identity, &b).unwrap(), b);
    }

    #[test]
    fn temperature_two_halves_logits() {
        let b = batch(&[[2.0, 0.0]], &[0]);
        let out = apply(&Calibrator::temperature(2.0).unwrap(), &b).unwrap();
        assert_eq!(out.logits().row(0), &[1.0, 0.0]);
        assert_abs_diff_eq!(b.confidences()[0], 0.8808, epsilon = 1e-4);
        assert_abs_diff_eq!(out.confidences()[0], 0.7311, epsilon = 1e-4);
        assert_eq!(out.predictions(), b.predictions());
        assert_eq!(out.hard_labels().unwrap(), &[0]);
    }

    #[test]
    fn temperature_bounds_enforced() {
        assert!(Calibrator::temperature(0.01).is_err());
        assert!(Calibrator::temperature(25.0).is_err());
        let b = batch(&[[2.0, 0.0]], &[0]);
        assert!(apply(&Calibrator::Temperature { temperature: -1.0 }, &b).is_err());
    }

    #[test]
    fn dimension_mismatch() {
        let b = batch(&[[2.0, 0.0]], &[0]);
        let v = Calibrator::Vector {
            scale: vec![1.0; 3],
            bias: vec![0.0; 3],
            converged: true,
        };
        assert!(matches!(apply(&v, &b), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn single_correct_sample_sharpens_to_t_min() {
        let t = fit_temperature_value(&batch(&[[2.0, 0.0]], &[0])).unwrap();
        assert_eq!(t, T_MIN);
    }

    #[test]
    fn single_wrong_sample_flattens_to_t_max() {
        let t = fit_temperature_value(&batch(&[[2.0, 0.0]], &[1])).unwrap();
        assert_eq!(t, T_MAX);
    }

    #[test]
    fn fit_requires_labels() {
        let b = PredictionBatch::unlabeled(Matrix::from_rows(&[[2.0, 0.0]]).unwrap()).unwrap();
        assert!(matches!(fit_temperature(&b), Err(Error::LabelsRequired(_))));
        assert!(matches!(fit_vector(&b), Err(Error::LabelsRequired(_))));
        assert!(matches!(
            nll_decomposition(&b, 1.0),
            Err(Error::LabelsRequired(_))
        ));
    }

    #[test]
    fn oracle_refit_is_idempotent() {
        let b = batch(
            &[[3.0, 0.0], [2.5, 0.2], [0.1, 2.0], [1.8, 0.0]],
            &[0, 1, 1, 0],
        );
        let t = fit_oracle(&b).unwrap().fitted_temperature().unwrap();
        let scaled = apply(&Calibrator::temperature(t).unwrap(), &b).unwrap();
        let t2 = fit_oracle(&scaled).unwrap().fitted_temperature().unwrap();
        assert!((t2 - 1.0).abs() < 1e-3, "refit temperature {t2}");
    }

    #[test]
    fn decomposition_edge_cases() {
        let all_correct = batch(&[[2.0, 0.0], [0.0, 1.0]], &[0, 1]);
        let d = nll_decomposition(&all_correct, 1.5).unwrap();
        assert_eq!((d.n_correct, d.n_wrong), (2, 0));
        assert_eq!(d.wrong_term, 0.0);
        assert_abs_diff_eq!(d.total, d.correct_term, epsilon = 1e-12);

        let all_wrong = batch(&[[2.0, 0.0], [0.0, 1.0]], &[1, 0]);
        let d = nll_decomposition(&all_wrong, 0.7).unwrap();
        assert_eq!((d.n_correct, d.n_wrong), (0, 2));
        assert_abs_diff_eq!(d.total, d.wrong_term, epsilon = 1e-12);
    }

    #[test]
    fn raising_temperature_trades_correct_for_wrong_loss() {
        let b = batch(&[[3.0, 0.0], [2.0, 0.5], [1.5, 0.0]], &[0, 0, 1]);
        let grid = [0.5, 1.0, 2.0, 4.0];
        let ds: Vec<_> = grid
            .iter()
            .map(|&t| nll_decomposition(&b, t).unwrap())
            .collect();
        for w in ds.windows(2) {
            assert!(w[1].wrong_term < w[0].wrong_term);
            assert!(w[1].correct_term > w[0].correct_term);
        }
    }

    #[test]
    fn vector_stays_near_start_when_already_calibrated() {
        // labels drawn to match the model's own probabilities closely
        let b = batch(
            &[
                [1.0, 0.0],
                [1.0, 0.0],
                [1.0, 0.0],
                [1.0, 0.0],
                [0.0, 1.0],
                [0.0, 1.0],
                [0.0, 1.0],
                [0.0, 1.0],
            ],
            &[0, 0, 0, 1, 1, 1, 1, 0],
        );
        let t = fit_temperature_value(&b).unwrap();
        match fit_vector(&b).unwrap() {
            Calibrator::Vector { scale, bias, .. } => {
                for s in scale {
                    assert!((s - 1.0 / t).abs() < 0.05);
                }
                for v in bias {
                    assert!(v.abs() < 0.05);
                }
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn json_round_trip_and_version_check() {
        let cal = Calibrator::temperature(1.75).unwrap();
        let text = cal.to_json().unwrap();
        assert!(text.contains("\"kind\": \"temperature\""));
        assert_eq!(Calibrator::from_json(&text).unwrap(), cal);
        let bumped = text.replace("\"schema_version\": 1", "\"schema_version\": 9");
        assert!(matches!(
            Calibrator::from_json(&bumped),
            Err(Error::SchemaVersion { found: 9, .. })
        ));
    }
}
