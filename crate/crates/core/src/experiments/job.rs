use std::path::Path;

use serde::{Deserialize, Serialize};

use super::runners::{depth_seed, split_trials, train_seed};
use super::{DatasetSpec, ExperimentError, ModelOptions, Precision, TrainOverrides};
use crate::nn::{train, CnnModel, NnError, Real, TrainingLog};

fn default_depth() -> usize {
    3
}
fn default_true() -> bool {
    true
}

/// A single training run: one model on one train / validation split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainJob {
    pub dataset: DatasetSpec,
    pub seed: u64,
    #[serde(default = "default_depth")]
    pub depth: usize,
    #[serde(default)]
    pub model: ModelOptions,
    #[serde(default)]
    pub train: TrainOverrides,
    #[serde(default = "default_true")]
    pub monitor: bool,
    #[serde(default)]
    pub record_initial: bool,
}

impl TrainJob {
    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        serde_json::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

fn run_as<T: Real>(job: &TrainJob, checkpoint: Option<&Path>) -> Result<TrainingLog, ExperimentError> {
    if job.depth == 0 {
        return Err(ExperimentError::Config("depth must be >= 1".into()));
    }
    let ds = job.dataset.load()?;
    let trial = split_trials(&job.dataset, &ds, job.seed, 1)?.remove(0);
    let shape = ds.shape().ok_or_else(|| ExperimentError::Config("empty dataset".into()))?;
    let spec = job.model.spec(job.depth, shape, ds.num_classes().max(2));
    let mut model: CnnModel<T> = spec.build(depth_seed(trial.seed, job.depth))?;
    let mut cfg = job.train.apply(train_seed(trial.seed));
    cfg.monitor = job.monitor;
    cfg.record_initial = job.record_initial;
    let log = train(&mut model, &trial.train, Some(&trial.val), &cfg);
    if let (Some(path), Ok(_)) = (checkpoint, &log) {
        model.save_json(path)?;
    }
    Ok(log?)
}

/// Trains the job's model and returns its per-epoch log. When the loss
/// diverges the error carries the log of the completed epochs.
pub fn run_train(job: &TrainJob, checkpoint: Option<&Path>) -> Result<TrainingLog, ExperimentError> {
    match job.model.precision {
        Precision::F32 => run_as::<f32>(job, checkpoint),
        Precision::F64 => run_as::<f64>(job, checkpoint),
    }
}

/// Partial log carried by a divergence error, if that is what `e` is.
pub fn diverged_log(e: &ExperimentError) -> Option<&TrainingLog> {
    match e {
        ExperimentError::Nn(NnError::DivergedLoss { log, .. }) => Some(log),
        _ => None,
    }
}
