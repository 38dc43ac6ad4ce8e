//! Gaussian-cluster domain-shift tasks and source-trained classifiers.
//!
//! Source samples are drawn around class means with equal pairwise
//! spacing. Target samples use the same means translated per class by
//! `mean_shift` in a seeded random direction, then rotated in the
//! coordinate planes (0,1), (2,3), ... by `rotation` radians. Target class
//! frequencies follow `class_priors_target` (label shift; zero entries drop
//! classes from the target entirely).

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::metrics::{self, PredictionBatch};
use crate::numerics::{self, argmax, Matrix, PROB_EPS};
use crate::pseudo_target::Model;

/// Current version of the task and model JSON documents.
pub const SCHEMA_VERSION: u32 = 1;

// independent streams so that e.g. changing n_target leaves the source intact
const SOURCE_STREAM: u64 = 0x5eed_0001;
const TARGET_STREAM: u64 = 0x5eed_0002;
const SHIFT_STREAM: u64 = 0x5eed_0003;
const SPLIT_STREAM: u64 = 0x5eed_0004;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSpec {
    pub num_classes: usize,
    pub dim: usize,
    /// Source samples, before the validation split.
    pub n_source: usize,
    pub n_target: usize,
    /// Length of the per-class translation of target means.
    pub mean_shift: f64,
    /// Rotation angle (radians) applied to target coordinates.
    pub rotation: f64,
    pub class_priors_target: Option<Vec<f64>>,
    pub cluster_std: f64,
    /// Distance between neighbouring class means.
    pub separation: f64,
    /// Share of source samples held out as a labeled validation split.
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for ShiftSpec {
    fn default() -> Self {
        Self {
            num_classes: 5,
            dim: 10,
            n_source: 2000,
            n_target: 2000,
            mean_shift: 0.0,
            rotation: 0.0,
            class_priors_target: None,
            cluster_std: 1.0,
            separation: 5.0,
            val_fraction: 0.2,
            seed: 0,
        }
    }
}

impl ShiftSpec {
    pub fn validate(&self) -> Result<()> {
        let c = self.num_classes;
        if c < 2 {
            return Err(Error::InvalidSpec(format!(
                "need at least 2 classes, got {c}"
            )));
        }
        if self.dim < 2 {
            return Err(Error::InvalidSpec(
                "input dimension must be at least 2".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::InvalidSpec("val_fraction must lie in [0, 1)".into()));
        }
        let n_val = self.n_val();
        if self.n_source - n_val < c || self.n_target < c {
            return Err(Error::InvalidSpec(format!(
                "sample counts must be at least the class count {c}"
            )));
        }
        if !(self.cluster_std > 0.0 && self.separation > 0.0) {
            return Err(Error::InvalidSpec(
                "cluster_std and separation must be positive".into(),
            ));
        }
        if !(self.mean_shift.is_finite() && self.mean_shift >= 0.0 && self.rotation.is_finite()) {
            return Err(Error::InvalidSpec(
                "mean_shift must be >= 0 and rotation finite".into(),
            ));
        }
        if let Some(p) = &self.class_priors_target {
            if p.len() != c {
                return Err(Error::InvalidSpec(format!(
                    "{} target priors for {c} classes",
                    p.len()
                )));
            }
            if p.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::InvalidSpec(
                    "target priors must be non-negative".into(),
                ));
            }
            let sum: f64 = p.iter().sum();
            if sum == 0.0 {
                return Err(Error::InvalidSpec("target priors are all zero".into()));
            }
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidSpec(format!("target priors sum to {sum}")));
            }
        }
        Ok(())
    }

    fn n_val(&self) -> usize {
        (self.n_source as f64 * self.val_fraction).round() as usize
    }

    /// Class means with equal spacing: scaled simplex vertices when
    /// `dim >= num_classes`, otherwise a regular polygon in the first plane.
    pub fn class_means(&self) -> Matrix {
        let (c, d) = (self.num_classes, self.dim);
        let mut means = Matrix::zeros(c, d);
        if d >= c {
            let r = self.separation / std::f64::consts::SQRT_2;
            for k in 0..c {
                means[(k, k)] = r;
            }
        } else {
            let r = self.separation / (2.0 * (std::f64::consts::PI / c as f64).sin());
            for k in 0..c {
                let a = 2.0 * std::f64::consts::PI * k as f64 / c as f64;
                means[(k, 0)] = r * a.cos();
                means[(k, 1)] = r * a.sin();
            }
        }
        means
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSet {
    pub inputs: Matrix,
    pub labels: Vec<usize>,
}

/// A generated source/target problem. Target labels are optional so a task
/// can be handed to source-free methods with them removed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTask {
    pub spec: ShiftSpec,
    pub source: LabeledSet,
    pub source_val: LabeledSet,
    pub target_inputs: Matrix,
    pub target_labels: Option<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct TaskDocument {
    schema_version: u32,
    task: SyntheticTask,
}

fn normal_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn sample_points(rng: &mut ChaCha8Rng, means: &Matrix, labels: &[usize], std: f64) -> Matrix {
    let d = means.cols();
    let mut x = Matrix::zeros(labels.len(), d);
    for (i, &y) in labels.iter().enumerate() {
        let noise = normal_vec(rng, d);
        for (j, v) in x.row_mut(i).iter_mut().enumerate() {
            *v = means[(y, j)] + std * noise[j];
        }
    }
    x
}

fn rotate_planes(x: &mut Matrix, angle: f64) {
    if angle == 0.0 {
        return;
    }
    let (s, c) = angle.sin_cos();
    for i in 0..x.rows() {
        let row = x.row_mut(i);
        for pair in row.chunks_exact_mut(2) {
            let (u, v) = (pair[0], pair[1]);
            pair[0] = c * u - s * v;
            pair[1] = s * u + c * v;
        }
    }
}

impl SyntheticTask {
    /// Generates a task; deterministic in `spec.seed`.
    pub fn generate(spec: &ShiftSpec) -> Result<Self> {
        spec.validate()?;
        let (c, d) = (spec.num_classes, spec.dim);
        let means = spec.class_means();

        // source: balanced classes, then a shuffled validation split
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ SOURCE_STREAM);
        let mut labels: Vec<usize> = (0..spec.n_source).map(|i| i % c).collect();
        labels.shuffle(&mut rng);
        let inputs = sample_points(&mut rng, &means, &labels, spec.cluster_std);
        let mut order: Vec<usize> = (0..spec.n_source).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed ^ SPLIT_STREAM));
        let (val_idx, train_idx) = order.split_at(spec.n_val());
        let pick = |idx: &[usize]| LabeledSet {
            inputs: inputs.select_rows(idx),
            labels: idx.iter().map(|&i| labels[i]).collect(),
        };
        let (source, source_val) = (pick(train_idx), pick(val_idx));

        // target: shifted means, prior-weighted labels, rotated coordinates
        let mut shift_rng = ChaCha8Rng::seed_from_u64(spec.seed ^ SHIFT_STREAM);
        let mut target_means = means.clone();
        for k in 0..c {
            let dir = normal_vec(&mut shift_rng, d);
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            for (j, v) in target_means.row_mut(k).iter_mut().enumerate() {
                *v += spec.mean_shift * dir[j] / norm;
            }
        }
        let uniform = vec![1.0 / c as f64; c];
        let priors = spec.class_priors_target.as_deref().unwrap_or(&uniform);
        let picker = WeightedIndex::new(priors).map_err(|e| Error::InvalidSpec(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ TARGET_STREAM);
        let target_labels: Vec<usize> = (0..spec.n_target)
            .map(|_| picker.sample(&mut rng))
            .collect();
        let mut target_inputs =
            sample_points(&mut rng, &target_means, &target_labels, spec.cluster_std);
        rotate_planes(&mut target_inputs, spec.rotation);

        Ok(Self {
            spec: spec.clone(),
            source,
            source_val,
            target_inputs,
            target_labels: Some(target_labels),
        })
    }

    /// Copy with target labels removed.
    pub fn without_target_labels(&self) -> Self {
        Self {
            target_labels: None,
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&TaskDocument {
            schema_version: SCHEMA_VERSION,
            task: self.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: TaskDocument = serde_json::from_str(text)?;
        check_version(doc.schema_version)?;
        let t = doc.task;
        t.spec.validate()?;
        let d = t.spec.dim;
        let c = t.spec.num_classes;
        let consistent = t.source.inputs.cols() == d
            && t.source_val.inputs.cols() == d
            && t.target_inputs.cols() == d
            && t.source.inputs.rows() == t.source.labels.len()
            && t.source_val.inputs.rows() == t.source_val.labels.len()
            && t.target_labels
                .as_ref()
                .is_none_or(|l| l.len() == t.target_inputs.rows())
            && t.source
                .labels
                .iter()
                .chain(&t.source_val.labels)
                .all(|&y| y < c)
            && t.target_labels.iter().flatten().all(|&y| y < c);
        if !consistent {
            return Err(invalid("task document is internally inconsistent"));
        }
        Ok(t)
    }
}

fn check_version(found: u32) -> Result<()> {
    if found != SCHEMA_VERSION {
        return Err(Error::SchemaVersion {
            found,
            expected: SCHEMA_VERSION,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Logit multiplier applied at inference; values above 1 induce overconfidence.
    pub gamma: f64,
    pub track_history: bool,
    /// Width of a tanh hidden layer; `None` trains multinomial logistic regression.
    pub hidden: Option<usize>,
    /// Seeds weight initialization (and bootstrap resampling).
    pub seed: u64,
    /// Standard deviation of the initial weights.
    pub init_scale: f64,
    /// Train on a bootstrap resample of the source set.
    pub bootstrap: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            lr: 0.5,
            gamma: 1.0,
            track_history: false,
            hidden: None,
            seed: 0,
            init_scale: 0.01,
            bootstrap: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(invalid("epochs must be at least 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(invalid("learning rate must be positive"));
        }
        if !(self.gamma >= 1.0 && self.gamma.is_finite()) {
            return Err(invalid(format!("gamma must be >= 1, got {}", self.gamma)));
        }
        if self.hidden == Some(0) {
            return Err(invalid("hidden width must be positive"));
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err(invalid("init_scale must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "arch", rename_all = "snake_case")]
pub enum Network {
    /// `z = W x + b`
    Linear { weight: Matrix, bias: Vec<f64> },
    /// `z = W2 tanh(W1 x + b1) + b2`
    Mlp {
        w1: Matrix,
        b1: Vec<f64>,
        w2: Matrix,
        b2: Vec<f64>,
    },
}

fn affine(weight: &Matrix, bias: &[f64], x: &[f64], out: &mut [f64]) {
    for (k, o) in out.iter_mut().enumerate() {
        *o = bias[k] + weight.row(k).iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
    }
}

impl Network {
    fn input_dim(&self) -> usize {
        match self {
            Network::Linear { weight, .. } => weight.cols(),
            Network::Mlp { w1, .. } => w1.cols(),
        }
    }

    fn num_classes(&self) -> usize {
        match self {
            Network::Linear { bias, .. } => bias.len(),
            Network::Mlp { b2, .. } => b2.len(),
        }
    }

    /// Raw logits, before sharpening.
    fn forward(&self, inputs: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(inputs.rows(), self.num_classes());
        match self {
            Network::Linear { weight, bias } => {
                for i in 0..inputs.rows() {
                    affine(weight, bias, inputs.row(i), out.row_mut(i));
                }
            }
            Network::Mlp { w1, b1, w2, b2 } => {
                let mut h = vec![0.0; b1.len()];
                for i in 0..inputs.rows() {
                    affine(w1, b1, inputs.row(i), &mut h);
                    h.iter_mut().for_each(|v| *v = v.tanh());
                    affine(w2, b2, &h, out.row_mut(i));
                }
            }
        }
        out
    }

    fn is_finite(&self) -> bool {
        match self {
            Network::Linear { weight, bias } => {
                weight.is_finite() && bias.iter().all(|v| v.is_finite())
            }
            Network::Mlp { w1, b1, w2, b2 } => {
                w1.is_finite() && w2.is_finite() && b1.iter().chain(b2).all(|v| v.is_finite())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean source cross-entropy before this epoch's update.
    pub source_loss: f64,
    /// Target metrics of the unsharpened model after the update.
    pub target_error: Option<f64>,
    pub target_nll: Option<f64>,
}

/// A source-trained classifier exposed through [`Model`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedClassifier {
    pub network: Network,
    pub gamma: f64,
    pub config: TrainConfig,
    pub history: Vec<EpochRecord>,
}

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    schema_version: u32,
    model: TrainedClassifier,
}

impl TrainedClassifier {
    /// Same weights with a different sharpening factor.
    pub fn with_gamma(&self, gamma: f64) -> Self {
        Self {
            gamma,
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&ModelDocument {
            schema_version: SCHEMA_VERSION,
            model: self.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(text)?;
        check_version(doc.schema_version)?;
        let m = doc.model;
        let shapes_ok = match &m.network {
            Network::Linear { weight, bias } => weight.rows() == bias.len(),
            Network::Mlp { w1, b1, w2, b2 } => {
                w1.rows() == b1.len() && w2.cols() == b1.len() && w2.rows() == b2.len()
            }
        };
        if !shapes_ok || !m.network.is_finite() || m.gamma.is_nan() || m.gamma < 1.0 {
            return Err(invalid("model document has inconsistent parameters"));
        }
        Ok(m)
    }

    /// Writes `epoch,source_loss,target_error,target_nll` rows.
    pub fn write_history_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for rec in &self.history {
            w.serialize(rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

impl Model for TrainedClassifier {
    fn num_classes(&self) -> usize {
        self.network.num_classes()
    }

    fn input_dim(&self) -> usize {
        self.network.input_dim()
    }

    fn logits(&self, inputs: &Matrix) -> Result<Matrix> {
        if inputs.cols() != self.input_dim() {
            return Err(invalid(format!(
                "inputs have {} features, model expects {}",
                inputs.cols(),
                self.input_dim()
            )));
        }
        let gamma = self.gamma;
        Ok(self.network.forward(inputs).map(|v| v * gamma))
    }
}

fn init_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Matrix::from_vec(rows, cols, data).expect("sized")
}

/// Gradient of mean cross-entropy w.r.t. the logits, and the loss itself.
fn softmax_residual(logits: &Matrix, labels: &[usize]) -> (Matrix, f64) {
    let n = logits.rows() as f64;
    let mut resid = Matrix::zeros(logits.rows(), logits.cols());
    let mut loss = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let r = resid.row_mut(i);
        numerics::softmax_into(logits.row(i), r);
        loss -= r[y].max(PROB_EPS).ln();
        r[y] -= 1.0;
        r.iter_mut().for_each(|v| *v /= n);
    }
    (resid, loss / n)
}

/// `W -= lr * resid^T X`, `b -= lr * colsum(resid)`
fn step_affine(weight: &mut Matrix, bias: &mut [f64], resid: &Matrix, x: &Matrix, lr: f64) {
    for i in 0..resid.rows() {
        let (r, xi) = (resid.row(i), x.row(i));
        for (k, &g) in r.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            bias[k] -= lr * g;
            for (w, &v) in weight.row_mut(k).iter_mut().zip(xi) {
                *w -= lr * g * v;
            }
        }
    }
}

/// Full-batch gradient descent on source cross-entropy.
pub fn train(task: &SyntheticTask, cfg: &TrainConfig) -> Result<TrainedClassifier> {
    cfg.validate()?;
    let (c, d) = (task.spec.num_classes, task.spec.dim);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (x, y) = if cfg.bootstrap {
        let n = task.source.labels.len();
        let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        (
            task.source.inputs.select_rows(&idx),
            idx.iter().map(|&i| task.source.labels[i]).collect(),
        )
    } else {
        (task.source.inputs.clone(), task.source.labels.clone())
    };

    let mut network = match cfg.hidden {
        None => Network::Linear {
            weight: init_matrix(&mut rng, c, d, cfg.init_scale),
            bias: vec![0.0; c],
        },
        Some(h) => Network::Mlp {
            // hidden layer needs non-trivial init to break symmetry
            w1: init_matrix(&mut rng, h, d, cfg.init_scale.max(1.0 / (d as f64).sqrt())),
            b1: vec![0.0; h],
            w2: init_matrix(&mut rng, c, h, cfg.init_scale),
            b2: vec![0.0; c],
        },
    };

    let mut history = Vec::new();
    for epoch in 0..cfg.epochs {
        let source_loss = match &mut network {
            Network::Linear { weight, bias } => {
                let mut logits = Matrix::zeros(x.rows(), c);
                for i in 0..x.rows() {
                    affine(weight, bias, x.row(i), logits.row_mut(i));
                }
                let (resid, loss) = softmax_residual(&logits, &y);
                step_affine(weight, bias, &resid, &x, cfg.lr);
                loss
            }
            Network::Mlp { w1, b1, w2, b2 } => {
                let h = b1.len();
                let mut hidden = Matrix::zeros(x.rows(), h);
                let mut logits = Matrix::zeros(x.rows(), c);
                for i in 0..x.rows() {
                    affine(w1, b1, x.row(i), hidden.row_mut(i));
                    hidden.row_mut(i).iter_mut().for_each(|v| *v = v.tanh());
                    affine(w2, b2, hidden.row(i), logits.row_mut(i));
                }
                let (resid, loss) = softmax_residual(&logits, &y);
                // back through W2 and tanh before W2 changes
                let mut dpre = Matrix::zeros(x.rows(), h);
                for i in 0..x.rows() {
                    let r = resid.row(i);
                    for j in 0..h {
                        let back: f64 = (0..c).map(|k| r[k] * w2[(k, j)]).sum();
                        let a = hidden[(i, j)];
                        dpre[(i, j)] = back * (1.0 - a * a);
                    }
                }
                step_affine(w2, b2, &resid, &hidden, cfg.lr);
                step_affine(w1, b1, &dpre, &x, cfg.lr);
                loss
            }
        };
        if !source_loss.is_finite() || !network.is_finite() {
            return Err(Error::Training { epoch });
        }
        if cfg.track_history {
            let (target_error, target_nll) = match &task.target_labels {
                Some(labels) => {
                    let batch = PredictionBatch::new(
                        network.forward(&task.target_inputs),
                        Some(labels.clone()),
                    )?;
                    (
                        Some(1.0 - metrics::accuracy(&batch)?),
                        Some(metrics::mean_nll(&batch)?),
                    )
                }
                None => (None, None),
            };
            history.push(EpochRecord {
                epoch,
                source_loss,
                target_error,
                target_nll,
            });
        }
    }

    Ok(TrainedClassifier {
        network,
        gamma: cfg.gamma,
        config: cfg.clone(),
        history,
    })
}

/// Averages member probabilities; logits are the log of the mean probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub members: Vec<TrainedClassifier>,
}

impl Model for Ensemble {
    fn num_classes(&self) -> usize {
        self.members[0].num_classes()
    }

    fn input_dim(&self) -> usize {
        self.members[0].input_dim()
    }

    fn logits(&self, inputs: &Matrix) -> Result<Matrix> {
        let c = self.num_classes();
        let mut mean = Matrix::zeros(inputs.rows(), c);
        let mut buf = vec![0.0; c];
        for m in &self.members {
            let z = m.logits(inputs)?;
            for i in 0..z.rows() {
                numerics::softmax_into(z.row(i), &mut buf);
                for (acc, p) in mean.row_mut(i).iter_mut().zip(&buf) {
                    *acc += p;
                }
            }
        }
        let k = self.members.len() as f64;
        Ok(mean.map(|p| (p / k).max(PROB_EPS).ln()))
    }
}

/// Trains one member per seed with otherwise identical settings.
pub fn ensemble_train(task: &SyntheticTask, cfg: &TrainConfig, seeds: &[u64]) -> Result<Ensemble> {
    if seeds.is_empty() {
        return Err(invalid("ensemble needs at least one member seed"));
    }
    let members = seeds
        .iter()
        .map(|&seed| {
            train(
                task,
                &TrainConfig {
                    seed,
                    ..cfg.clone()
                },
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Ensemble { members })
}

/// Predicted classes of `model` on `inputs`.
pub fn predict<M: Model + ?Sized>(model: &M, inputs: &Matrix) -> Result<Vec<usize>> {
    Ok(model.logits(inputs)?.iter_rows().map(argmax).collect())
}
