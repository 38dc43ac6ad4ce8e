//! Shared fixtures for the criterion benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pseudocal::{
    Matrix, PredictionBatch, ShiftSpec, SyntheticTask, TrainConfig, TrainedClassifier,
};

/// A shifted five-class task with a sharpened logistic-regression model.
pub fn shifted_task(n: usize, seed: u64) -> (SyntheticTask, TrainedClassifier) {
    let spec = ShiftSpec {
        n_source: n,
        n_target: n,
        mean_shift: 2.5,
        seed,
        ..ShiftSpec::default()
    };
    let task = SyntheticTask::generate(&spec).expect("valid spec");
    let cfg = TrainConfig {
        epochs: 100,
        gamma: 3.0,
        ..TrainConfig::default()
    };
    let model = pseudocal::synthetic::train(&task, &cfg).expect("training converges");
    (task, model)
}

/// Labeled batch of pseudo-random logits, `n` rows by `classes` columns.
pub fn random_batch(n: usize, classes: usize, seed: u64) -> PredictionBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..n * classes)
        .map(|_| rng.random_range(-4.0..4.0))
        .collect();
    let labels = (0..n).map(|_| rng.random_range(0..classes)).collect();
    PredictionBatch::new(
        Matrix::from_vec(n, classes, data).expect("sized"),
        Some(labels),
    )
    .expect("finite logits")
}
