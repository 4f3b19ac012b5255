//! Optimizer, balanced batching, patient-level stratified cross-validation
//! and multi-trial reporting.

mod batches;
mod folds;
mod optim;
mod report;
mod trainer;

use std::sync::Arc;

use thiserror::Error;

use crate::clstm::NetError;
use crate::features::{FeatureError, FeatureSequence};

pub use batches::balanced_batches;
pub use folds::{stratified_kfold, FoldAssignment};
pub use optim::{adam_step, OptimizerState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS, DEFAULT_LEARNING_RATE};
pub use report::{percentile, run_trials, CrossvalConfig, TrialOutcome, TrialReport};
pub use trainer::{evaluate, score_predictions, train_model, EpochStats, EvalResult, TrainConfig, TrainOutcome, VisitScore};

/// GA month labels handled by the protocol.
pub const GA_MONTHS: [u8; 5] = [5, 6, 7, 8, 9];

/// Loss above which training is considered diverged.
pub const DIVERGENCE_LOSS: f64 = 1e6;

/// One recording with its presumed-GA label. Features are raw (not
/// normalized); normalization is fitted per training fold.
#[derive(Debug, Clone)]
pub struct LabeledExample {
    pub patient_id: String,
    pub visit_id: String,
    pub recording_id: String,
    pub ga_months: u8,
    pub features: Arc<FeatureSequence>,
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("no training examples for GA month {0}")]
    EmptyClass(u8),
    #[error("{patients} patients cannot be split into {folds} folds")]
    TooFewPatients { patients: usize, folds: usize },
    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(String),
    #[error("parameter/gradient mismatch: {0}")]
    ShapeMismatch(String),
    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64, history: Vec<EpochStats> },
}
