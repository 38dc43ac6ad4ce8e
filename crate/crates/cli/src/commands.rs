use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use pseudocal::pseudo_target::{self, LambdaPolicy, Pairing, BETA_ALPHA};
use pseudocal::report::{self, EnsembleConfig, EvalConfig, Method};
use pseudocal::synthetic::{
    train as train_model, ShiftSpec, SyntheticTask, TrainConfig, TrainedClassifier,
};
use pseudocal::{LabelMode, MixupConfig};

use crate::{
    CalibrateArgs, CliError, EvaluateArgs, GenerateArgs, MixupArgs, SweepArgs, TrainArgs, Variant,
};

type Result<T> = std::result::Result<T, CliError>;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())
        .and_then(|()| w.flush())
        .map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })
}

/// Runs a CSV writer into `path`, flushing before returning.
fn write_csv(
    path: &Path,
    f: impl FnOnce(&mut BufWriter<File>) -> pseudocal::Result<()>,
) -> Result<()> {
    let mut w = create(path)?;
    f(&mut w)?;
    w.flush().map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn load_task(path: &Path) -> Result<SyntheticTask> {
    Ok(SyntheticTask::from_json(&read(path)?)?)
}

fn load_model(path: &Path) -> Result<TrainedClassifier> {
    Ok(TrainedClassifier::from_json(&read(path)?)?)
}

fn mixup_config(args: &MixupArgs, seed: u64) -> MixupConfig {
    MixupConfig {
        epochs: args.mixup_epochs,
        batch_size: args.batch_size,
        ..MixupConfig::default()
            .with_lambda(args.lambda)
            .with_label_mode(args.label_mode.into())
            .with_seed(seed)
    }
}

pub fn generate(a: GenerateArgs) -> Result<()> {
    let spec = ShiftSpec {
        num_classes: a.classes,
        dim: a.dim,
        n_source: a.n_source,
        n_target: a.n_target,
        mean_shift: a.mean_shift,
        rotation: a.rotation,
        class_priors_target: a.priors,
        cluster_std: a.cluster_std,
        separation: a.separation,
        val_fraction: a.val_fraction,
        seed: a.seed,
    };
    let mut task = SyntheticTask::generate(&spec)?;
    if a.strip_target_labels {
        task = task.without_target_labels();
    }
    write_text(&a.out, &task.to_json()?)
}

pub fn train(a: TrainArgs) -> Result<()> {
    let task = load_task(&a.task)?;
    let cfg = TrainConfig {
        epochs: a.epochs,
        lr: a.lr,
        gamma: a.gamma,
        track_history: a.history.is_some(),
        hidden: a.hidden,
        seed: a.seed,
        init_scale: a.init_scale,
        bootstrap: a.bootstrap,
    };
    let model = train_model(&task, &cfg)?;
    write_text(&a.out, &model.to_json()?)?;
    if let Some(path) = &a.history {
        write_csv(path, |w| model.write_history_csv(w))?;
    }
    Ok(())
}

pub fn calibrate(a: CalibrateArgs) -> Result<()> {
    let task = load_task(&a.task)?;
    let model = load_model(&a.model)?;
    let inputs = &task.target_inputs;
    let mut cfg = mixup_config(&a.mixup, a.seed);
    let calibrator = match a.variant {
        Variant::PseudoLabel | Variant::FilteredPl => {
            if a.provenance.is_some() {
                return Err(CliError::Usage(
                    "--provenance needs a mixup variant (pseudocal, pseudocal_same, beta_mixup)"
                        .into(),
                ));
            }
            if a.variant == Variant::PseudoLabel {
                pseudo_target::variant_pseudo_label(&model, inputs)?
            } else {
                pseudo_target::variant_filtered_pl(&model, inputs, a.mixup.threshold)?
            }
        }
        Variant::PseudoCal | Variant::PseudoCalSame | Variant::BetaMixup => {
            if a.variant == Variant::PseudoCalSame {
                cfg.pairing = Pairing::SameLabel;
            }
            if a.variant == Variant::BetaMixup {
                cfg.lambda = LambdaPolicy::Beta { alpha: BETA_ALPHA };
            }
            let run = pseudo_target::calibrate_detailed(&model, inputs, &cfg)?;
            if let Some(path) = &a.provenance {
                let preds = run.pseudo_predictions();
                write_csv(path, |w| run.pseudo_set.write_provenance_csv(w, &preds))?;
            }
            run.calibrator
        }
    };
    write_text(&a.out, &calibrator.to_json()?)
}

pub fn evaluate(a: EvaluateArgs) -> Result<()> {
    if a.runs == 0 {
        return Err(CliError::Usage("--runs must be at least 1".into()));
    }
    let task = load_task(&a.task)?;
    let model = load_model(&a.model)?;
    let methods = report::parse_methods(&a.methods).map_err(|e| CliError::Usage(e.to_string()))?;
    let ensemble = methods.contains(&Method::Ensemble).then(|| EnsembleConfig {
        train: TrainConfig {
            bootstrap: true,
            track_history: false,
            ..model.config.clone()
        },
        members: a.ensemble_members,
    });
    let cfg = EvalConfig {
        methods,
        bins: a.bins,
        mixup: mixup_config(&a.mixup, a.seed),
        filter_threshold: a.mixup.threshold,
        ensemble,
    };
    let seeds: Vec<u64> = (0..a.runs as u64).map(|k| a.seed.wrapping_add(k)).collect();
    let summary = report::evaluate_seeds(&model, &task, &cfg, &seeds)?;

    let table = summary.to_table();
    print!("{table}");
    if let Some(path) = &a.out {
        write_text(path, &summary.to_json()?)?;
    }
    if let Some(path) = &a.table {
        write_text(path, &table)?;
    }
    if let Some(dir) = &a.bins_dir {
        fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.clone(),
            source,
        })?;
        for row in &summary.runs[0].rows {
            let path = dir.join(format!("{}.csv", row.method.name()));
            write_csv(&path, |w| row.reliability.write_csv(w))?;
        }
    }
    Ok(())
}

pub fn sweep(a: SweepArgs) -> Result<()> {
    if a.runs == 0 {
        return Err(CliError::Usage("--runs must be at least 1".into()));
    }
    let task = load_task(&a.task)?;
    let model = load_model(&a.model)?;
    let modes: Vec<LabelMode> = a.label_mode.iter().map(|&m| m.into()).collect();
    let seeds: Vec<u64> = (0..a.runs as u64).map(|k| a.seed.wrapping_add(k)).collect();
    let base = MixupConfig {
        epochs: a.mixup_epochs,
        batch_size: a.batch_size,
        ..MixupConfig::default()
    };
    let rows = report::lambda_sweep(&model, &task, &a.lambdas, &modes, &seeds, &base, a.bins)?;
    write_csv(&a.out, |w| report::write_sweep_csv(&rows, w))
}
