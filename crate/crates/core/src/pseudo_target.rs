//! Pseudo-target calibration.
//!
//! Unlabeled target inputs are paired up and mixed,
//! `x = lambda * x_a + (1 - lambda) * x_b`, keeping only pairs whose
//! pseudo labels (the model's own predictions on the real inputs) differ.
//! Each mixed sample is labeled with the pseudo label of its dominant
//! constituent. A temperature fitted on this labeled pseudo-target set
//! stands in for the temperature one would fit with real target labels.
//! The model is only ever queried for logits.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::metrics::{PredictionBatch, Targets};
use crate::numerics::{argmax, Matrix};
use crate::scalers::{self, Calibrator};

/// Default fixed mix ratio.
pub const DEFAULT_LAMBDA: f64 = 0.65;
/// Shape parameter of the symmetric Beta used by the Beta mix-ratio policy.
pub const BETA_ALPHA: f64 = 0.3;
/// Default confidence threshold for the filtered pseudo-label variant.
pub const DEFAULT_FILTER_THRESHOLD: f64 = 0.95;

/// Black-box inference contract: inputs (one sample per row) to logits.
///
/// Implementations must be deterministic.
pub trait Model {
    fn num_classes(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn logits(&self, inputs: &Matrix) -> Result<Matrix>;
}

impl<M: Model + ?Sized> Model for &M {
    fn num_classes(&self) -> usize {
        (**self).num_classes()
    }
    fn input_dim(&self) -> usize {
        (**self).input_dim()
    }
    fn logits(&self, inputs: &Matrix) -> Result<Matrix> {
        (**self).logits(inputs)
    }
}

/// Runs the model and wraps its output, checking the shape it returned.
pub fn infer<M: Model + ?Sized>(model: &M, inputs: &Matrix) -> Result<Matrix> {
    if inputs.cols() != model.input_dim() {
        return Err(invalid(format!(
            "inputs have {} features, model expects {}",
            inputs.cols(),
            model.input_dim()
        )));
    }
    let logits = model.logits(inputs)?;
    if logits.rows() != inputs.rows() || logits.cols() != model.num_classes() {
        return Err(invalid("model returned logits of the wrong shape"));
    }
    Ok(logits)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum LambdaPolicy {
    /// Same ratio for every pair, in (0.5, 1].
    Fixed { lambda: f64 },
    /// Ratio drawn per pair from Beta(alpha, alpha).
    Beta { alpha: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    /// Pseudo label of the dominant sample.
    Hard,
    /// `lambda * onehot(pl_a) + (1 - lambda) * onehot(pl_b)`
    Soft,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    /// Keep pairs whose pseudo labels differ.
    DistinctLabel,
    /// Keep pairs of distinct samples sharing a pseudo label (ablation).
    SameLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixupConfig {
    pub lambda: LambdaPolicy,
    pub label_mode: LabelMode,
    pub pairing: Pairing,
    /// Passes over the target set; each pass draws a fresh permutation.
    pub epochs: usize,
    /// Pairs are drawn within mini-batches of this size; `None` pairs
    /// across the whole target set.
    pub batch_size: Option<usize>,
    pub seed: u64,
}

impl Default for MixupConfig {
    fn default() -> Self {
        Self {
            lambda: LambdaPolicy::Fixed {
                lambda: DEFAULT_LAMBDA,
            },
            label_mode: LabelMode::Hard,
            pairing: Pairing::DistinctLabel,
            epochs: 1,
            batch_size: None,
            seed: 0,
        }
    }
}

impl MixupConfig {
    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = LambdaPolicy::Fixed { lambda };
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_label_mode(mut self, mode: LabelMode) -> Self {
        self.label_mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self.lambda {
            LambdaPolicy::Fixed { lambda } if !(lambda > 0.5 && lambda <= 1.0) => {
                return Err(invalid(format!(
                    "fixed mix ratio must lie in (0.5, 1], got {lambda}"
                )))
            }
            LambdaPolicy::Beta { alpha } if !(alpha > 0.0 && alpha.is_finite()) => {
                return Err(invalid(format!("beta shape must be positive, got {alpha}")))
            }
            _ => {}
        }
        if self.epochs == 0 {
            return Err(invalid("mixup epochs must be at least 1"));
        }
        if matches!(self.batch_size, Some(b) if b < 2) {
            return Err(invalid("mixup batch size must be at least 2"));
        }
        Ok(())
    }
}

/// Where a pseudo-target sample came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub index_a: usize,
    pub index_b: usize,
    pub lambda: f64,
    pub pl_a: usize,
    pub pl_b: usize,
    /// `index_a` when `lambda > 0.5`, otherwise `index_b`.
    pub dominant: usize,
}

/// Mixed inputs with their pseudo-target labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoTargetSet {
    pub inputs: Matrix,
    pub hard_labels: Vec<usize>,
    /// Present when synthesized with [`LabelMode::Soft`].
    pub soft_labels: Option<Matrix>,
    pub provenance: Vec<PairRecord>,
}

impl PseudoTargetSet {
    pub fn len(&self) -> usize {
        self.hard_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hard_labels.is_empty()
    }

    /// Writes one audit row per pseudo sample:
    /// `index_a,index_b,lambda,pl_a,pl_b,y_pt,pseudo_correct`.
    /// `pseudo_predictions` are the model's classes on the mixed inputs.
    pub fn write_provenance_csv<W: Write>(
        &self,
        writer: W,
        pseudo_predictions: &[usize],
    ) -> Result<()> {
        if pseudo_predictions.len() != self.len() || self.provenance.len() != self.len() {
            return Err(invalid(
                "provenance and predictions must match the pseudo set",
            ));
        }
        #[derive(Serialize)]
        struct Row {
            index_a: usize,
            index_b: usize,
            lambda: f64,
            pl_a: usize,
            pl_b: usize,
            y_pt: usize,
            pseudo_correct: bool,
        }
        let mut w = csv::Writer::from_writer(writer);
        for ((rec, &y), &pred) in self
            .provenance
            .iter()
            .zip(&self.hard_labels)
            .zip(pseudo_predictions)
        {
            w.serialize(Row {
                index_a: rec.index_a,
                index_b: rec.index_b,
                lambda: rec.lambda,
                pl_a: rec.pl_a,
                pl_b: rec.pl_b,
                y_pt: y,
                pseudo_correct: pred == y,
            })?;
        }
        w.flush()?;
        Ok(())
    }
}

fn pseudo_labels<M: Model + ?Sized>(model: &M, inputs: &Matrix) -> Result<Vec<usize>> {
    Ok(infer(model, inputs)?.iter_rows().map(argmax).collect())
}

/// Builds a pseudo-target set from unlabeled target inputs.
pub fn synthesize<M: Model + ?Sized>(
    model: &M,
    target_inputs: &Matrix,
    cfg: &MixupConfig,
) -> Result<PseudoTargetSet> {
    cfg.validate()?;
    let n = target_inputs.rows();
    if n < 2 {
        return Err(invalid(format!("need at least 2 target samples, got {n}")));
    }
    let pl = pseudo_labels(model, target_inputs)?;
    let classes = model.num_classes();
    let dim = target_inputs.cols();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let beta = match cfg.lambda {
        LambdaPolicy::Beta { alpha } => {
            Some(Beta::new(alpha, alpha).map_err(|e| invalid(e.to_string()))?)
        }
        LambdaPolicy::Fixed { .. } => None,
    };

    let mut data = Vec::new();
    let mut hard = Vec::new();
    let mut soft = Vec::new();
    let mut provenance = Vec::new();
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size.unwrap_or(n)) {
            let mut partner: Vec<usize> = (0..chunk.len()).collect();
            partner.shuffle(&mut rng);
            for (i, &a) in chunk.iter().enumerate() {
                let b = chunk[partner[i]];
                let lambda = match (&beta, cfg.lambda) {
                    (Some(dist), _) => dist.sample(&mut rng),
                    (None, LambdaPolicy::Fixed { lambda }) => lambda,
                    (None, LambdaPolicy::Beta { .. }) => unreachable!(),
                };
                let keep = match cfg.pairing {
                    Pairing::DistinctLabel => pl[a] != pl[b],
                    Pairing::SameLabel => pl[a] == pl[b] && a != b,
                };
                if !keep {
                    continue;
                }
                let (xa, xb) = (target_inputs.row(a), target_inputs.row(b));
                data.extend(
                    xa.iter()
                        .zip(xb)
                        .map(|(u, v)| lambda * u + (1.0 - lambda) * v),
                );
                let dominant = if lambda > 0.5 { a } else { b };
                hard.push(pl[dominant]);
                if cfg.label_mode == LabelMode::Soft {
                    let mut row = vec![0.0; classes];
                    row[pl[a]] += lambda;
                    row[pl[b]] += 1.0 - lambda;
                    soft.extend(row);
                }
                provenance.push(PairRecord {
                    index_a: a,
                    index_b: b,
                    lambda,
                    pl_a: pl[a],
                    pl_b: pl[b],
                    dominant,
                });
            }
        }
    }

    if hard.is_empty() {
        if pl.iter().all(|&c| c == pl[0]) && cfg.pairing == Pairing::DistinctLabel {
            return Err(Error::DegenerateTarget { class: pl[0] });
        }
        return Err(invalid(
            "no pair survived the pairing filter; increase mixup epochs",
        ));
    }
    let m = hard.len();
    Ok(PseudoTargetSet {
        inputs: Matrix::from_vec(m, dim, data)?,
        soft_labels: match cfg.label_mode {
            LabelMode::Soft => Some(Matrix::from_vec(m, classes, soft)?),
            LabelMode::Hard => None,
        },
        hard_labels: hard,
        provenance,
    })
}

/// Full output of a pseudo-target calibration run.
#[derive(Debug, Clone)]
pub struct PseudoCalibration {
    pub calibrator: Calibrator,
    pub pseudo_set: PseudoTargetSet,
    /// Model logits on the mixed inputs.
    pub pseudo_logits: Matrix,
}

impl PseudoCalibration {
    pub fn pseudo_predictions(&self) -> Vec<usize> {
        self.pseudo_logits.iter_rows().map(argmax).collect()
    }
}

/// Synthesizes a pseudo-target set, runs the model on it and fits a
/// temperature against the pseudo labels.
pub fn calibrate_detailed<M: Model + ?Sized>(
    model: &M,
    target_inputs: &Matrix,
    cfg: &MixupConfig,
) -> Result<PseudoCalibration> {
    let pseudo_set = synthesize(model, target_inputs, cfg)?;
    let pseudo_logits = infer(model, &pseudo_set.inputs)?;
    let targets = match &pseudo_set.soft_labels {
        Some(soft) => Targets::Soft(soft.clone()),
        None => Targets::Hard(pseudo_set.hard_labels.clone()),
    };
    let batch = PredictionBatch::with_targets(pseudo_logits.clone(), Some(targets))?;
    Ok(PseudoCalibration {
        calibrator: scalers::fit_temperature(&batch)?,
        pseudo_set,
        pseudo_logits,
    })
}

/// Source-free temperature estimate from unlabeled target inputs.
pub fn calibrate<M: Model + ?Sized>(
    model: &M,
    target_inputs: &Matrix,
    cfg: &MixupConfig,
) -> Result<Calibrator> {
    Ok(calibrate_detailed(model, target_inputs, cfg)?.calibrator)
}

/// Fraction of pseudo samples whose correctness against their pseudo label
/// agrees with the correctness of their dominant real sample against its
/// true label.
///
/// The dominant sample's prediction is its pseudo label, which is the
/// pseudo sample's hard label, so only the mixed inputs need inference.
pub fn correspondence_rate<M: Model + ?Sized>(
    model: &M,
    pseudo: &PseudoTargetSet,
    target_labels: &[usize],
) -> Result<f64> {
    let preds: Vec<usize> = infer(model, &pseudo.inputs)?
        .iter_rows()
        .map(argmax)
        .collect();
    correspondence_from_predictions(pseudo, &preds, target_labels)
}

/// [`correspondence_rate`] with precomputed predictions on the mixed inputs.
pub fn correspondence_from_predictions(
    pseudo: &PseudoTargetSet,
    pseudo_predictions: &[usize],
    target_labels: &[usize],
) -> Result<f64> {
    if pseudo.is_empty() || pseudo.provenance.len() != pseudo.len() {
        return Err(invalid("pseudo set is missing provenance"));
    }
    if pseudo_predictions.len() != pseudo.len() {
        return Err(invalid("one prediction per pseudo sample required"));
    }
    let mut agree = 0usize;
    for ((rec, &y_pt), &pred) in pseudo
        .provenance
        .iter()
        .zip(&pseudo.hard_labels)
        .zip(pseudo_predictions)
    {
        let truth = *target_labels.get(rec.dominant).ok_or_else(|| {
            invalid(format!(
                "provenance refers to sample {} but only {} labels given",
                rec.dominant,
                target_labels.len()
            ))
        })?;
        let pseudo_correct = pred == y_pt;
        let real_correct = y_pt == truth;
        if pseudo_correct == real_correct {
            agree += 1;
        }
    }
    Ok(agree as f64 / pseudo.len() as f64)
}

/// Temperature fitted on the real target inputs against their own pseudo labels.
pub fn variant_pseudo_label<M: Model + ?Sized>(
    model: &M,
    target_inputs: &Matrix,
) -> Result<Calibrator> {
    let logits = infer(model, target_inputs)?;
    let labels = logits.iter_rows().map(argmax).collect();
    scalers::fit_temperature(&PredictionBatch::new(logits, Some(labels))?)
}

/// As [`variant_pseudo_label`], restricted to samples with confidence at
/// least `threshold`.
pub fn variant_filtered_pl<M: Model + ?Sized>(
    model: &M,
    target_inputs: &Matrix,
    threshold: f64,
) -> Result<Calibrator> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(invalid(format!(
            "threshold must lie in (0, 1), got {threshold}"
        )));
    }
    let batch = PredictionBatch::unlabeled(infer(model, target_inputs)?)?;
    let keep: Vec<usize> = batch
        .confidences()
        .iter()
        .enumerate()
        .filter(|(_, &c)| c >= threshold)
        .map(|(i, _)| i)
        .collect();
    if keep.is_empty() {
        return Err(Error::EmptyFilter { threshold });
    }
    let logits = batch.logits().select_rows(&keep);
    let labels = logits.iter_rows().map(argmax).collect();
    scalers::fit_temperature(&PredictionBatch::new(logits, Some(labels))?)
}

/// Mixup restricted to pairs that share a pseudo label.
pub fn variant_same_label<M: Model + ?Sized>(
    model: &M,
    target_inputs: &Matrix,
    cfg: &MixupConfig,
) -> Result<Calibrator> {
    let cfg = MixupConfig {
        pairing: Pairing::SameLabel,
        ..cfg.clone()
    };
    calibrate(model, target_inputs, &cfg)
}

/// Mixup with per-pair ratios drawn from a Beta distribution. A fixed
/// policy in `cfg` is replaced by Beta(0.3, 0.3).
pub fn variant_beta_mixup<M: Model + ?Sized>(
    model: &M,
    target_inputs: &Matrix,
    cfg: &MixupConfig,
) -> Result<Calibrator> {
    let mut cfg = cfg.clone();
    if !matches!(cfg.lambda, LambdaPolicy::Beta { .. }) {
        cfg.lambda = LambdaPolicy::Beta { alpha: BETA_ALPHA };
    }
    calibrate(model, target_inputs, &cfg)
}
