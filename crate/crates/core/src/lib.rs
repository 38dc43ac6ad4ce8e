//! Source-free calibration of classifiers under domain shift.
//!
//! The central routine, [`pseudo_target::calibrate`], builds a labeled
//! pseudo-target set by mixing pairs of unlabeled target inputs that the
//! model assigns to different classes, then fits a temperature on it. The
//! crate also provides the usual calibration metrics ([`metrics`]), scaling
//! baselines ([`scalers`]), a synthetic domain-shift harness
//! ([`synthetic`]) and experiment reporting ([`report`]).

pub mod error;
pub mod metrics;
pub mod numerics;
pub mod pseudo_target;
pub mod report;
pub mod scalers;
pub mod synthetic;

pub use error::{Error, Result};
pub use metrics::{BinStats, PredictionBatch, Targets};
pub use numerics::{Label, Matrix};
pub use pseudo_target::{LabelMode, LambdaPolicy, MixupConfig, Model, Pairing, PseudoTargetSet};
pub use report::{EvalConfig, ExperimentResult, Method};
pub use scalers::Calibrator;
pub use synthetic::{ShiftSpec, SyntheticTask, TrainConfig, TrainedClassifier};
