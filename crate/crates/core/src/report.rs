//! Experiment evaluation and result tables.

use std::fmt::{self, Write as _};
use std::io::Write;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::metrics::{self, BinStats, PredictionBatch};
use crate::pseudo_target::{self, infer, LabelMode, MixupConfig, Model, DEFAULT_FILTER_THRESHOLD};
use crate::scalers::{self, Calibrator};
use crate::synthetic::{ensemble_train, EpochRecord, ShiftSpec, SyntheticTask, TrainConfig};

/// Current version of result documents.
pub const RESULT_SCHEMA_VERSION: u32 = 1;

/// Mix ratios of the default sensitivity sweep.
pub const DEFAULT_SWEEP_LAMBDAS: [f64; 7] = [0.51, 0.55, 0.6, 0.65, 0.7, 0.8, 0.9];

/// Default number of runs averaged per experiment.
pub const DEFAULT_RUNS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Raw model output.
    None,
    /// Temperature fitted on target labels.
    TempOracle,
    /// Temperature fitted on the labeled source validation split.
    TempSource,
    Vector,
    Matrix,
    #[serde(rename = "pseudocal")]
    PseudoCal,
    PseudoLabel,
    FilteredPl,
    #[serde(rename = "pseudocal_same")]
    PseudoCalSame,
    BetaMixup,
    Ensemble,
}

impl Method {
    pub const ALL: [Method; 11] = [
        Method::None,
        Method::TempOracle,
        Method::TempSource,
        Method::Vector,
        Method::Matrix,
        Method::PseudoCal,
        Method::PseudoLabel,
        Method::FilteredPl,
        Method::PseudoCalSame,
        Method::BetaMixup,
        Method::Ensemble,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::None => "none",
            Method::TempOracle => "temp_oracle",
            Method::TempSource => "temp_source",
            Method::Vector => "vector",
            Method::Matrix => "matrix",
            Method::PseudoCal => "pseudocal",
            Method::PseudoLabel => "pseudo_label",
            Method::FilteredPl => "filtered_pl",
            Method::PseudoCalSame => "pseudocal_same",
            Method::BetaMixup => "beta_mixup",
            Method::Ensemble => "ensemble",
        }
    }

    /// Whether the method only rescales logits by a temperature of the given model.
    pub fn is_temperature_kind(self) -> bool {
        !matches!(self, Method::Vector | Method::Matrix | Method::Ensemble)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "oracle" => Ok(Method::TempOracle),
            "tempscal" => Ok(Method::TempSource),
            other => Method::ALL
                .into_iter()
                .find(|m| m.name() == other)
                .ok_or_else(|| invalid(format!("unknown method `{other}`"))),
        }
    }
}

/// Parses a comma-separated method list.
pub fn parse_methods(list: &str) -> Result<Vec<Method>> {
    let methods: Vec<Method> = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    if methods.is_empty() {
        return Err(invalid("method list is empty"));
    }
    Ok(methods)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub train: TrainConfig,
    pub members: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub methods: Vec<Method>,
    pub bins: usize,
    /// Mixup settings for the pseudo-target methods; its seed is the run seed.
    pub mixup: MixupConfig,
    pub filter_threshold: f64,
    /// Required when `methods` contains [`Method::Ensemble`].
    pub ensemble: Option<EnsembleConfig>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            methods: vec![Method::None, Method::TempOracle, Method::PseudoCal],
            bins: metrics::DEFAULT_BINS,
            mixup: MixupConfig::default(),
            filter_threshold: DEFAULT_FILTER_THRESHOLD,
            ensemble: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: Method,
    pub ece: f64,
    pub nll: f64,
    pub brier: f64,
    pub accuracy: f64,
    /// Fitted temperature, for temperature-kind calibrators.
    pub temperature: Option<f64>,
    pub reliability: BinStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub schema_version: u32,
    pub task: ShiftSpec,
    pub seed: u64,
    pub bins: usize,
    pub rows: Vec<MethodResult>,
    /// Present when PseudoCal was evaluated.
    pub correspondence_rate: Option<f64>,
    pub pseudo_set_size: Option<usize>,
    /// Kept out of the document so reruns are byte-identical.
    #[serde(skip)]
    pub elapsed: Duration,
}

impl ExperimentResult {
    pub fn row(&self, method: Method) -> Option<&MethodResult> {
        self.rows.iter().find(|r| r.method == method)
    }
}

fn check_access(method: Method, task: &SyntheticTask, cfg: &EvalConfig) -> Result<()> {
    let deny = |requirement: &str| {
        Err(Error::DataAccess {
            method: method.name().into(),
            requirement: requirement.into(),
        })
    };
    match method {
        Method::TempOracle if task.target_labels.is_none() => deny("target labels"),
        Method::TempSource | Method::Vector | Method::Matrix
            if task.source_val.labels.is_empty() =>
        {
            deny("a labeled source validation split")
        }
        Method::Ensemble if cfg.ensemble.is_none() => {
            deny("a training configuration for ensemble members")
        }
        Method::Ensemble if task.source.labels.is_empty() => deny("labeled source training data"),
        _ => Ok(()),
    }
}

fn score(
    method: Method,
    batch: &PredictionBatch,
    bins: usize,
    temperature: Option<f64>,
) -> Result<MethodResult> {
    let reliability = metrics::reliability_bins(batch, bins)?;
    Ok(MethodResult {
        method,
        ece: reliability.ece(),
        nll: metrics::mean_nll(batch)?,
        brier: metrics::mean_brier(batch)?,
        accuracy: metrics::accuracy(batch)?,
        temperature,
        reliability,
    })
}

/// Fits every requested method under its own data access, applies it to
/// the model's target logits and scores the result against target labels.
///
/// Source-free methods receive only target inputs, scaling baselines the
/// labeled source validation split, and the oracle the target labels.
pub fn evaluate_all<M: Model + ?Sized>(
    model: &M,
    task: &SyntheticTask,
    cfg: &EvalConfig,
) -> Result<ExperimentResult> {
    let start = Instant::now();
    for &m in &cfg.methods {
        check_access(m, task, cfg)?;
    }
    let Some(labels) = task.target_labels.clone() else {
        return Err(Error::DataAccess {
            method: "evaluate".into(),
            requirement: "target labels to compute metrics".into(),
        });
    };
    let target_inputs = &task.target_inputs;
    let target = PredictionBatch::new(infer(model, target_inputs)?, Some(labels.clone()))?;
    let source_val = || -> Result<PredictionBatch> {
        PredictionBatch::new(
            infer(model, &task.source_val.inputs)?,
            Some(task.source_val.labels.clone()),
        )
    };

    let mut rows = Vec::with_capacity(cfg.methods.len());
    let mut correspondence = None;
    let mut pseudo_size = None;
    for &method in &cfg.methods {
        let calibrator = match method {
            Method::None => Calibrator::Identity,
            Method::TempOracle => scalers::fit_oracle(&target)?,
            Method::TempSource => scalers::fit_temperature(&source_val()?)?,
            Method::Vector => scalers::fit_vector(&source_val()?)?,
            Method::Matrix => scalers::fit_matrix(&source_val()?)?,
            Method::PseudoCal => {
                let run = pseudo_target::calibrate_detailed(model, target_inputs, &cfg.mixup)?;
                correspondence = Some(pseudo_target::correspondence_from_predictions(
                    &run.pseudo_set,
                    &run.pseudo_predictions(),
                    &labels,
                )?);
                pseudo_size = Some(run.pseudo_set.len());
                run.calibrator
            }
            Method::PseudoLabel => pseudo_target::variant_pseudo_label(model, target_inputs)?,
            Method::FilteredPl => {
                pseudo_target::variant_filtered_pl(model, target_inputs, cfg.filter_threshold)?
            }
            Method::PseudoCalSame => {
                pseudo_target::variant_same_label(model, target_inputs, &cfg.mixup)?
            }
            Method::BetaMixup => {
                pseudo_target::variant_beta_mixup(model, target_inputs, &cfg.mixup)?
            }
            Method::Ensemble => {
                let ens = cfg.ensemble.as_ref().expect("access checked");
                let seeds: Vec<u64> = (0..ens.members as u64)
                    .map(|k| {
                        ens.train
                            .seed
                            .wrapping_add(cfg.mixup.seed.wrapping_mul(1009))
                            .wrapping_add(k)
                    })
                    .collect();
                let ensemble = ensemble_train(task, &ens.train, &seeds)?;
                let batch =
                    PredictionBatch::new(infer(&ensemble, target_inputs)?, Some(labels.clone()))?;
                rows.push(score(method, &batch, cfg.bins, None)?);
                continue;
            }
        };
        let scored = scalers::apply(&calibrator, &target)?;
        rows.push(score(
            method,
            &scored,
            cfg.bins,
            calibrator.fitted_temperature(),
        )?);
    }

    Ok(ExperimentResult {
        schema_version: RESULT_SCHEMA_VERSION,
        task: task.spec.clone(),
        seed: cfg.mixup.seed,
        bins: cfg.bins,
        rows,
        correspondence_rate: correspondence,
        pseudo_set_size: pseudo_size,
        elapsed: start.elapsed(),
    })
}

/// Per-method averages over several runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub ece_mean: f64,
    pub ece_std: f64,
    pub nll_mean: f64,
    pub brier_mean: f64,
    pub accuracy_mean: f64,
    pub temperature_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub seeds: Vec<u64>,
    pub methods: Vec<MethodSummary>,
    pub correspondence_rate_mean: Option<f64>,
    pub runs: Vec<ExperimentResult>,
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn std_dev(values: &[f64]) -> f64 {
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64).sqrt()
}

/// Averages results produced by [`evaluate_all`] with the same method list.
pub fn summarize(runs: Vec<ExperimentResult>) -> Result<RunSummary> {
    let first = runs
        .first()
        .ok_or_else(|| invalid("no runs to summarize"))?;
    let methods = first
        .rows
        .iter()
        .map(|r| {
            let rows: Vec<&MethodResult> = runs
                .iter()
                .map(|run| {
                    run.row(r.method)
                        .ok_or_else(|| invalid("runs evaluated different methods"))
                })
                .collect::<Result<_>>()?;
            let col = |f: fn(&MethodResult) -> f64| rows.iter().map(|r| f(r)).collect::<Vec<_>>();
            let eces = col(|r| r.ece);
            let temps: Option<Vec<f64>> = rows.iter().map(|r| r.temperature).collect();
            Ok(MethodSummary {
                method: r.method,
                ece_mean: mean(&eces),
                ece_std: std_dev(&eces),
                nll_mean: mean(&col(|r| r.nll)),
                brier_mean: mean(&col(|r| r.brier)),
                accuracy_mean: mean(&col(|r| r.accuracy)),
                temperature_mean: temps.map(|t| mean(&t)),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let rates: Option<Vec<f64>> = runs.iter().map(|r| r.correspondence_rate).collect();
    Ok(RunSummary {
        schema_version: RESULT_SCHEMA_VERSION,
        seeds: runs.iter().map(|r| r.seed).collect(),
        methods,
        correspondence_rate_mean: rates.map(|r| mean(&r)),
        runs,
    })
}

/// Runs [`evaluate_all`] once per seed (the seed drives mixup and ensembles).
pub fn evaluate_seeds<M: Model + ?Sized>(
    model: &M,
    task: &SyntheticTask,
    cfg: &EvalConfig,
    seeds: &[u64],
) -> Result<RunSummary> {
    let runs = seeds
        .iter()
        .map(|&seed| {
            let cfg = EvalConfig {
                mixup: cfg.mixup.clone().with_seed(seed),
                ..cfg.clone()
            };
            evaluate_all(model, task, &cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    summarize(runs)
}

impl RunSummary {
    pub fn method(&self, method: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == method)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Aligned text table in the layout of the usual ECE comparison tables,
    /// with an accuracy row at the bottom.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<16} {:>9} {:>8} {:>8} {:>8} {:>8}",
            "Method", "ECE (%)", "+/-", "NLL", "Brier", "T"
        );
        let _ = writeln!(out, "{}", "-".repeat(62));
        for m in &self.methods {
            let t = m
                .temperature_mean
                .map_or_else(|| "-".to_string(), |t| format!("{t:.3}"));
            let _ = writeln!(
                out,
                "{:<16} {:>9.2} {:>8.2} {:>8.4} {:>8.4} {:>8}",
                m.method.name(),
                100.0 * m.ece_mean,
                100.0 * m.ece_std,
                m.nll_mean,
                m.brier_mean,
                t
            );
        }
        let _ = writeln!(out, "{}", "-".repeat(62));
        if let Some(base) = self.methods.first() {
            let _ = writeln!(
                out,
                "{:<16} {:>9.2}",
                "Accuracy (%)",
                100.0 * base.accuracy_mean
            );
        }
        if let Some(rate) = self.correspondence_rate_mean {
            let _ = writeln!(out, "{:<16} {:>9.2}", "Correspond. (%)", 100.0 * rate);
        }
        out
    }
}

/// Mean ECE of PseudoCal at one (mix ratio, label mode) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub label_mode: LabelMode,
    pub ece_mean: f64,
    pub ece_std: f64,
    pub temperature_mean: f64,
    pub runs: usize,
}

/// PseudoCal ECE over a grid of fixed mix ratios and label modes, averaged
/// over mixup seeds.
pub fn lambda_sweep<M: Model + ?Sized>(
    model: &M,
    task: &SyntheticTask,
    lambdas: &[f64],
    label_modes: &[LabelMode],
    seeds: &[u64],
    base: &MixupConfig,
    bins: usize,
) -> Result<Vec<SweepRow>> {
    if seeds.is_empty() {
        return Err(invalid("sweep needs at least one seed"));
    }
    if let Some(bad) = lambdas.iter().find(|&&l| !(l > 0.5 && l < 1.0)) {
        return Err(invalid(format!(
            "sweep mix ratios must lie in (0.5, 1), got {bad}"
        )));
    }
    let labels = task
        .target_labels
        .clone()
        .ok_or_else(|| Error::DataAccess {
            method: "sweep".into(),
            requirement: "target labels to compute metrics".into(),
        })?;
    let target = PredictionBatch::new(infer(model, &task.target_inputs)?, Some(labels))?;

    let mut rows = Vec::new();
    for &mode in label_modes {
        for &lambda in lambdas {
            let mut eces = Vec::with_capacity(seeds.len());
            let mut temps = Vec::with_capacity(seeds.len());
            for &seed in seeds {
                let cfg = base
                    .clone()
                    .with_lambda(lambda)
                    .with_label_mode(mode)
                    .with_seed(seed);
                let cal = pseudo_target::calibrate(model, &task.target_inputs, &cfg)?;
                eces.push(metrics::ece(&scalers::apply(&cal, &target)?, bins)?);
                temps.push(cal.fitted_temperature().expect("temperature calibrator"));
            }
            rows.push(SweepRow {
                lambda,
                label_mode: mode,
                ece_mean: mean(&eces),
                ece_std: std_dev(&eces),
                temperature_mean: mean(&temps),
                runs: seeds.len(),
            });
        }
    }
    Ok(rows)
}

/// Writes `lambda,label_mode,ece_mean,ece_std,temperature_mean,runs` rows.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Shape of a target-NLL training curve: how far NLL climbs back above its
/// minimum, and how much the error moves meanwhile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NllCurveSummary {
    pub min_epoch: usize,
    pub min_nll: f64,
    pub final_nll: f64,
    /// `final_nll / min_nll`
    pub nll_ratio: f64,
    /// Max minus min target error from `min_epoch` to the last epoch.
    pub error_range: f64,
    pub final_error: f64,
}

pub fn summarize_history(history: &[EpochRecord]) -> Result<NllCurveSummary> {
    let points: Vec<(usize, f64, f64)> = history
        .iter()
        .filter_map(|r| Some((r.epoch, r.target_nll?, r.target_error?)))
        .collect();
    if points.is_empty() {
        return Err(invalid("history carries no target metrics"));
    }
    let (arg, &(min_epoch, min_nll, _)) = points
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .expect("non-empty");
    let span = &points[arg..];
    let (lo, hi) = span
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.2), hi.max(p.2))
        });
    let last = points.last().expect("non-empty");
    Ok(NllCurveSummary {
        min_epoch,
        min_nll,
        final_nll: last.1,
        nll_ratio: last.1 / min_nll,
        error_range: hi - lo,
        final_error: last.2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{train, ShiftSpec};

    fn setup() -> (SyntheticTask, crate::synthetic::TrainedClassifier) {
        let spec = ShiftSpec {
            n_source: 500,
            n_target: 500,
            mean_shift: 2.0,
            seed: 5,
            ..ShiftSpec::default()
        };
        let task = SyntheticTask::generate(&spec).unwrap();
        let cfg = TrainConfig {
            epochs: 100,
            gamma: 3.0,
            ..TrainConfig::default()
        };
        let model = train(&task, &cfg).unwrap();
        (task, model)
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
            assert_eq!(
                serde_json::to_string(&m).unwrap(),
                format!("\"{}\"", m.name())
            );
        }
        assert_eq!("oracle".parse::<Method>().unwrap(), Method::TempOracle);
        assert!("bogus".parse::<Method>().is_err());
        assert_eq!(
            parse_methods("none, pseudocal").unwrap(),
            vec![Method::None, Method::PseudoCal]
        );
        assert!(parse_methods(" , ").is_err());
    }

    #[test]
    fn none_row_is_raw_ece() {
        let (task, model) = setup();
        let cfg = EvalConfig {
            methods: vec![Method::None],
            ..EvalConfig::default()
        };
        let res = evaluate_all(&model, &task, &cfg).unwrap();
        let raw =
            PredictionBatch::new(model_logits(&model, &task), task.target_labels.clone()).unwrap();
        assert_eq!(res.rows[0].ece, metrics::ece(&raw, 15).unwrap());
        assert!(res.correspondence_rate.is_none());
    }

    fn model_logits(model: &impl Model, task: &SyntheticTask) -> crate::numerics::Matrix {
        model.logits(&task.target_inputs).unwrap()
    }

    #[test]
    fn all_methods_run_and_temperature_rows_share_accuracy() {
        let (task, model) = setup();
        let cfg = EvalConfig {
            methods: Method::ALL.to_vec(),
            ensemble: Some(EnsembleConfig {
                train: TrainConfig {
                    bootstrap: true,
                    ..model.config.clone()
                },
                members: 3,
            }),
            ..EvalConfig::default()
        };
        let res = evaluate_all(&model, &task, &cfg).unwrap();
        assert_eq!(res.rows.len(), Method::ALL.len());
        let acc = res.row(Method::None).unwrap().accuracy;
        for r in &res.rows {
            assert!(r.ece.is_finite() && r.nll.is_finite() && r.brier.is_finite());
            if r.method.is_temperature_kind() {
                assert_eq!(r.accuracy, acc, "{}", r.method);
                assert!(r.temperature.is_some() || r.method == Method::None);
            }
        }
        assert!(res.correspondence_rate.is_some());
    }

    #[test]
    fn data_access_is_enforced() {
        let (task, model) = setup();
        let stripped = task.without_target_labels();
        let cfg = EvalConfig {
            methods: vec![Method::TempOracle],
            ..EvalConfig::default()
        };
        match evaluate_all(&model, &stripped, &cfg) {
            Err(Error::DataAccess { method, .. }) => assert_eq!(method, "temp_oracle"),
            other => panic!("expected data access error, got {other:?}"),
        }
        let cfg = EvalConfig {
            methods: vec![Method::Ensemble],
            ..EvalConfig::default()
        };
        assert!(matches!(
            evaluate_all(&model, &task, &cfg),
            Err(Error::DataAccess { .. })
        ));
    }

    #[test]
    fn reruns_are_byte_identical() {
        let (task, model) = setup();
        let cfg = EvalConfig::default();
        let a = evaluate_seeds(&model, &task, &cfg, &[1, 2]).unwrap();
        let b = evaluate_seeds(&model, &task, &cfg, &[1, 2]).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        assert_eq!(a.to_table(), b.to_table());
        assert!(a.to_table().contains("pseudocal"));
    }

    #[test]
    fn sweep_rejects_bad_lambdas_and_writes_csv() {
        let (task, model) = setup();
        let base = MixupConfig::default();
        assert!(lambda_sweep(&model, &task, &[0.5], &[LabelMode::Hard], &[0], &base, 15).is_err());
        let rows = lambda_sweep(
            &model,
            &task,
            &[0.6, 0.9],
            &[LabelMode::Hard, LabelMode::Soft],
            &[0, 1],
            &base,
            15,
        )
        .unwrap();
        assert_eq!(rows.len(), 4);
        let mut out = Vec::new();
        write_sweep_csv(&rows, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("lambda,label_mode,ece_mean,ece_std,temperature_mean,runs\n"));
        assert!(text.contains(",soft,"));
    }

    #[test]
    fn history_summary() {
        let rec = |epoch, nll, err| EpochRecord {
            epoch,
            source_loss: 0.0,
            target_error: Some(err),
            target_nll: Some(nll),
        };
        let h = [
            rec(0, 2.0, 0.5),
            rec(1, 1.0, 0.30),
            rec(2, 1.3, 0.31),
            rec(3, 1.5, 0.29),
        ];
        let s = summarize_history(&h).unwrap();
        assert_eq!(s.min_epoch, 1);
        assert!((s.nll_ratio - 1.5).abs() < 1e-12);
        assert!((s.error_range - 0.02).abs() < 1e-12);
        assert!(summarize_history(&[]).is_err());
    }
}
