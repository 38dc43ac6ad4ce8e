//! Persisted documents: tasks, models, calibrators and results.

use pseudocal::report::{self, EvalConfig, RunSummary};
use pseudocal::synthetic::{train, SCHEMA_VERSION};
use pseudocal::{Calibrator, Error, ShiftSpec, SyntheticTask, TrainConfig, TrainedClassifier};

fn small() -> (SyntheticTask, TrainedClassifier) {
    let spec = ShiftSpec {
        n_source: 300,
        n_target: 200,
        mean_shift: 2.0,
        seed: 11,
        ..ShiftSpec::default()
    };
    let task = SyntheticTask::generate(&spec).unwrap();
    let model = train(
        &task,
        &TrainConfig {
            epochs: 40,
            gamma: 2.0,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    (task, model)
}

#[test]
fn task_and_model_round_trip_exactly() {
    let (task, model) = small();
    let task2 = SyntheticTask::from_json(&task.to_json().unwrap()).unwrap();
    assert_eq!(task2, task);
    let model2 = TrainedClassifier::from_json(&model.to_json().unwrap()).unwrap();
    assert_eq!(model2, model);
    assert_eq!(model2.to_json().unwrap(), model.to_json().unwrap());
}

#[test]
fn schema_version_mismatch_is_reported() {
    let (task, _) = small();
    let doc = task.to_json().unwrap().replacen(
        &format!("\"schema_version\":{SCHEMA_VERSION}"),
        "\"schema_version\":99",
        1,
    );
    match SyntheticTask::from_json(&doc) {
        Err(Error::SchemaVersion { found: 99, .. }) => {}
        other => panic!("expected schema error, got {other:?}"),
    }
}

#[test]
fn stripped_task_keeps_inputs() {
    let (task, _) = small();
    let blind = task.without_target_labels();
    assert!(blind.target_labels.is_none());
    assert_eq!(blind.target_inputs, task.target_inputs);
    let back = SyntheticTask::from_json(&blind.to_json().unwrap()).unwrap();
    assert!(back.target_labels.is_none());
}

#[test]
fn calibrator_documents() {
    for cal in [Calibrator::Identity, Calibrator::temperature(2.5).unwrap()] {
        let back = Calibrator::from_json(&cal.to_json().unwrap()).unwrap();
        assert_eq!(back, cal);
    }
    assert!(Calibrator::temperature(0.0).is_err());
    assert!(Calibrator::from_json(
        r#"{"schema_version":1,"calibrator":{"kind":"temperature","temperature":-1}}"#
    )
    .is_err());
}

#[test]
fn result_summary_round_trips() {
    let (task, model) = small();
    let summary = report::evaluate_seeds(&model, &task, &EvalConfig::default(), &[0, 1]).unwrap();
    let json = summary.to_json().unwrap();
    let back: RunSummary = serde_json::from_str(&json).unwrap();
    assert_eq!(back.to_json().unwrap(), json);
    assert_eq!(back.seeds, vec![0, 1]);
    assert_eq!(back.runs[0].rows.len(), 3);
}
