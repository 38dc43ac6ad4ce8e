//! Calibration metrics: ECE with its reliability bins, mean NLL and mean Brier.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numerics::{self, argmax, check_logits, Label, Matrix};

/// Default number of equal-width confidence bins.
pub const DEFAULT_BINS: usize = 15;

/// Supervision attached to a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Targets {
    Hard(Vec<usize>),
    /// One probability vector per row.
    Soft(Matrix),
}

/// Model outputs for a set of samples, with optional labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionBatch {
    logits: Matrix,
    targets: Option<Targets>,
}

impl PredictionBatch {
    pub fn new(logits: Matrix, labels: Option<Vec<usize>>) -> Result<Self> {
        Self::with_targets(logits, labels.map(Targets::Hard))
    }

    pub fn unlabeled(logits: Matrix) -> Result<Self> {
        Self::with_targets(logits, None)
    }

    pub fn with_targets(logits: Matrix, targets: Option<Targets>) -> Result<Self> {
        let n = logits.rows();
        let classes = logits.cols();
        if n == 0 {
            return Err(invalid("batch must contain at least one sample"));
        }
        for (i, row) in logits.iter_rows().enumerate() {
            check_logits(row).map_err(|e| invalid(format!("row {i}: {e}")))?;
        }
        match &targets {
            Some(Targets::Hard(labels)) => {
                if labels.len() != n {
                    return Err(invalid(format!("{} labels for {n} samples", labels.len())));
                }
                if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
                    return Err(invalid(format!(
                        "label {bad} out of range for {classes} classes"
                    )));
                }
            }
            Some(Targets::Soft(soft)) => {
                if soft.rows() != n || soft.cols() != classes {
                    return Err(invalid(format!(
                        "soft labels are {} x {}, expected {n} x {classes}",
                        soft.rows(),
                        soft.cols()
                    )));
                }
                for (i, row) in soft.iter_rows().enumerate() {
                    let sum: f64 = row.iter().sum();
                    if row.iter().any(|v| !(0.0..=1.0).contains(v)) || (sum - 1.0).abs() > 1e-9 {
                        return Err(invalid(format!(
                            "soft label {i} is not a probability vector"
                        )));
                    }
                }
            }
            None => {}
        }
        Ok(Self { logits, targets })
    }

    pub fn len(&self) -> usize {
        self.logits.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.logits.rows() == 0
    }

    pub fn num_classes(&self) -> usize {
        self.logits.cols()
    }

    pub fn logits(&self) -> &Matrix {
        &self.logits
    }

    pub fn targets(&self) -> Option<&Targets> {
        self.targets.as_ref()
    }

    /// Hard labels, or `LabelsRequired` when the batch has none.
    pub fn hard_labels(&self) -> Result<&[usize]> {
        match &self.targets {
            Some(Targets::Hard(l)) => Ok(l),
            Some(Targets::Soft(_)) => Err(Error::LabelsRequired(
                "hard class labels required, batch carries soft labels".into(),
            )),
            None => Err(Error::LabelsRequired("batch has no labels".into())),
        }
    }

    pub(crate) fn require_targets(&self) -> Result<&Targets> {
        self.targets
            .as_ref()
            .ok_or_else(|| Error::LabelsRequired("batch has no labels".into()))
    }

    /// Label of sample `i`, if the batch is labeled.
    pub fn label(&self, i: usize) -> Option<Label<'_>> {
        match &self.targets {
            Some(Targets::Hard(l)) => Some(Label::Hard(l[i])),
            Some(Targets::Soft(s)) => Some(Label::Soft(s.row(i))),
            None => None,
        }
    }

    /// Same labels, new logits. Used by calibrators.
    pub(crate) fn with_logits(&self, logits: Matrix) -> Result<Self> {
        Self::with_targets(logits, self.targets.clone())
    }

    pub fn predictions(&self) -> Vec<usize> {
        self.logits.iter_rows().map(argmax).collect()
    }

    pub fn probabilities(&self) -> Matrix {
        let mut out = Matrix::zeros(self.len(), self.num_classes());
        for i in 0..self.len() {
            numerics::softmax_into(self.logits.row(i), out.row_mut(i));
        }
        out
    }

    /// Max softmax probability per sample.
    pub fn confidences(&self) -> Vec<f64> {
        let mut buf = vec![0.0; self.num_classes()];
        self.logits
            .iter_rows()
            .map(|z| {
                numerics::softmax_into(z, &mut buf);
                buf.iter().copied().fold(0.0, f64::max)
            })
            .collect()
    }

    /// Per-sample correctness of the predicted class against hard labels.
    pub fn correctness(&self) -> Result<Vec<bool>> {
        let labels = self.hard_labels()?;
        Ok(self
            .logits
            .iter_rows()
            .zip(labels)
            .map(|(z, &y)| argmax(z) == y)
            .collect())
    }
}

/// One confidence bin of a reliability diagram.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub bin_lower: f64,
    pub bin_upper: f64,
    pub count: usize,
    /// Zero for empty bins.
    pub accuracy: f64,
    /// Zero for empty bins.
    pub confidence: f64,
}

/// Equal-width partition of (0, 1] with per-bin accuracy and confidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinStats {
    pub bins: Vec<Bin>,
    pub total: usize,
}

impl BinStats {
    /// Bin-weighted mean of `|accuracy - confidence|`.
    pub fn ece(&self) -> f64 {
        let n = self.total as f64;
        self.bins
            .iter()
            .filter(|b| b.count > 0)
            .map(|b| b.count as f64 / n * (b.accuracy - b.confidence).abs())
            .sum()
    }

    /// Writes `bin_lower,bin_upper,count,accuracy,confidence` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for b in &self.bins {
            w.serialize(b)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn edge(k: usize, bins: usize) -> f64 {
    k as f64 / bins as f64
}

/// Index of the bin `(lower, upper]` holding `conf`; zero goes to the first bin.
pub(crate) fn bin_index(conf: f64, bins: usize) -> usize {
    let mut k = ((conf * bins as f64).ceil() as usize).clamp(1, bins) - 1;
    // settle rounding so membership agrees with the edge comparisons
    while k > 0 && conf <= edge(k, bins) {
        k -= 1;
    }
    while k + 1 < bins && conf > edge(k + 1, bins) {
        k += 1;
    }
    k
}

/// Assigns each sample to its confidence bin and aggregates accuracy and confidence.
pub fn reliability_bins(batch: &PredictionBatch, bins: usize) -> Result<BinStats> {
    if bins == 0 {
        return Err(invalid("bin count must be positive"));
    }
    let correct = batch.correctness()?;
    let conf = batch.confidences();

    let mut counts = vec![0usize; bins];
    let mut hits = vec![0usize; bins];
    let mut conf_sum = vec![0.0; bins];
    for (&c, &ok) in conf.iter().zip(&correct) {
        let k = bin_index(c, bins);
        counts[k] += 1;
        hits[k] += ok as usize;
        conf_sum[k] += c;
    }

    let bins = (0..bins)
        .map(|k| {
            let count = counts[k];
            let (accuracy, confidence) = if count == 0 {
                (0.0, 0.0)
            } else {
                (hits[k] as f64 / count as f64, conf_sum[k] / count as f64)
            };
            Bin {
                bin_lower: edge(k, bins),
                bin_upper: edge(k + 1, bins),
                count,
                accuracy,
                confidence,
            }
        })
        .collect();
    Ok(BinStats {
        bins,
        total: batch.len(),
    })
}

/// Expected calibration error over `bins` equal-width bins.
pub fn ece(batch: &PredictionBatch, bins: usize) -> Result<f64> {
    Ok(reliability_bins(batch, bins)?.ece())
}

/// Mean cross-entropy against the batch's hard or soft labels.
pub fn mean_nll(batch: &PredictionBatch) -> Result<f64> {
    batch.require_targets()?;
    let mut buf = vec![0.0; batch.num_classes()];
    let mut total = 0.0;
    for i in 0..batch.len() {
        numerics::softmax_into(batch.logits().row(i), &mut buf);
        let y = batch.label(i).expect("labels checked above");
        total += numerics::nll_unchecked(&buf, y);
    }
    Ok(total / batch.len() as f64)
}

/// Mean class-normalized Brier score against hard labels.
pub fn mean_brier(batch: &PredictionBatch) -> Result<f64> {
    let labels = batch.hard_labels()?;
    let mut buf = vec![0.0; batch.num_classes()];
    let mut total = 0.0;
    for (z, &y) in batch.logits().iter_rows().zip(labels) {
        numerics::softmax_into(z, &mut buf);
        total += numerics::brier_unchecked(&buf, y);
    }
    Ok(total / batch.len() as f64)
}

/// Fraction of samples whose predicted class equals the hard label.
pub fn accuracy(batch: &PredictionBatch) -> Result<f64> {
    let correct = batch.correctness()?;
    Ok(correct.iter().filter(|&&c| c).count() as f64 / correct.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Two-class logits whose max softmax probability is `conf` on class `pred`.
    fn logit_row(conf: f64, pred: usize) -> Vec<f64> {
        let gap = (conf / (1.0 - conf)).ln();
        if pred == 0 {
            vec![gap, 0.0]
        } else {
            vec![0.0, gap]
        }
    }

    fn batch_from(confs: &[f64], correct: &[bool]) -> PredictionBatch {
        let rows: Vec<Vec<f64>> = confs.iter().map(|&c| logit_row(c, 0)).collect();
        let labels = correct.iter().map(|&ok| if ok { 0 } else { 1 }).collect();
        PredictionBatch::new(Matrix::from_rows(&rows).unwrap(), Some(labels)).unwrap()
    }

    #[test]
    fn four_sample_example() {
        let batch = batch_from(&[0.6, 0.7, 0.8, 0.9], &[true, false, false, true]);
        let stats = reliability_bins(&batch, 2).unwrap();
        assert_eq!(stats.bins[0].count, 0);
        assert_eq!(stats.bins[1].count, 4);
        assert_abs_diff_eq!(stats.bins[1].accuracy, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(stats.bins[1].confidence, 0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(ece(&batch, 2).unwrap(), 0.25, epsilon = 1e-12);
    }

    #[test]
    fn single_certain_sample_lands_in_last_bin() {
        let batch = PredictionBatch::new(Matrix::from_rows(&[[60.0, 0.0]]).unwrap(), Some(vec![0]))
            .unwrap();
        let stats = reliability_bins(&batch, 15).unwrap();
        let last = stats.bins.last().unwrap();
        assert_eq!(last.count, 1);
        assert_eq!(last.accuracy, 1.0);
        assert_abs_diff_eq!(last.confidence, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ece(&batch, 15).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn counts_partition_the_batch() {
        let batch = batch_from(&[0.91, 0.92, 0.93, 0.95, 0.99], &[true; 5]);
        let stats = reliability_bins(&batch, 10).unwrap();
        assert_eq!(stats.bins.iter().map(|b| b.count).sum::<usize>(), 5);
        assert_eq!(stats.bins[9].count, 5);
    }

    #[test]
    fn bin_edges_are_upper_inclusive() {
        assert_eq!(bin_index(0.0, 4), 0);
        assert_eq!(bin_index(0.25, 4), 0);
        assert_eq!(bin_index(0.2500001, 4), 1);
        assert_eq!(bin_index(1.0, 4), 3);
        assert_eq!(bin_index(0.6, 5), 2);
        assert_eq!(bin_index(0.5, 1), 0);
    }

    #[test]
    fn labels_required() {
        let batch = PredictionBatch::unlabeled(Matrix::from_rows(&[[1.0, 0.0]]).unwrap()).unwrap();
        assert!(matches!(ece(&batch, 15), Err(Error::LabelsRequired(_))));
        assert!(matches!(mean_nll(&batch), Err(Error::LabelsRequired(_))));
        assert!(matches!(mean_brier(&batch), Err(Error::LabelsRequired(_))));
        assert!(reliability_bins(&batch_from(&[0.6], &[true]), 0).is_err());
    }

    #[test]
    fn batch_validation() {
        let m = Matrix::from_rows(&[[1.0, 0.0]]).unwrap();
        assert!(PredictionBatch::new(m.clone(), Some(vec![2])).is_err());
        assert!(PredictionBatch::new(m.clone(), Some(vec![0, 1])).is_err());
        assert!(PredictionBatch::new(Matrix::zeros(0, 2), None).is_err());
        let nan = Matrix::from_rows(&[[f64::NAN, 0.0]]).unwrap();
        assert!(PredictionBatch::new(nan, None).is_err());
        let soft = Matrix::from_rows(&[[0.3, 0.3]]).unwrap();
        assert!(PredictionBatch::with_targets(m, Some(Targets::Soft(soft))).is_err());
    }

    #[test]
    fn nll_and_brier_closed_forms() {
        let uniform = Matrix::from_rows(&[[0.0, 0.0], [0.0, 0.0]]).unwrap();
        let batch = PredictionBatch::new(uniform, Some(vec![0, 1])).unwrap();
        assert_abs_diff_eq!(
            mean_nll(&batch).unwrap(),
            std::f64::consts::LN_2,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(mean_brier(&batch).unwrap(), 0.25, epsilon = 1e-12);

        let perfect = Matrix::from_rows(&[[80.0, 0.0], [0.0, 80.0]]).unwrap();
        let batch = PredictionBatch::new(perfect, Some(vec![0, 1])).unwrap();
        assert_abs_diff_eq!(mean_nll(&batch).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(mean_brier(&batch).unwrap(), 0.0, epsilon = 1e-12);
        assert_eq!(accuracy(&batch).unwrap(), 1.0);
    }

    #[test]
    fn csv_columns() {
        let batch = batch_from(&[0.6, 0.9], &[true, false]);
        let mut out = Vec::new();
        reliability_bins(&batch, 2)
            .unwrap()
            .write_csv(&mut out)
            .unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "bin_lower,bin_upper,count,accuracy,confidence"
        );
        assert_eq!(lines.count(), 2);
    }
}
