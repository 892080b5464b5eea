//! Declarative experiments. A JSON [`ExperimentConfig`] names one of the
//! experiment kinds and its sweep; [`run`] turns it into a [`ResultTable`]
//! that is a pure function of the config.

mod config;
mod job;
mod runners;
mod table;

use thiserror::Error;

pub use config::{Architecture, DatasetSpec, ExperimentConfig, ExperimentKind, ModelOptions, Precision, SwapGrid, TrainOverrides};
pub use job::{diverged_log, run_train, TrainJob};
pub use runners::{
    run_depth_improvement_table, run_depth_sweep, run_featuremap_trace, run_input_feature_correlation,
    run_kernel_size_sweep, run_kernel_vs_swap, run_orderness_histogram, run_orderness_vs_swap,
};
pub use table::{Cell, ResultTable};

use crate::corruption::SwapError;
use crate::data::DataError;
use crate::metric::MetricError;
use crate::nn::NnError;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Swap(#[from] SwapError),
    #[error(transparent)]
    Nn(#[from] NnError),
}

pub fn run(config: &ExperimentConfig) -> Result<ResultTable, ExperimentError> {
    config.validate()?;
    let mut table = match config.experiment {
        ExperimentKind::OrdernessVsSwap => run_orderness_vs_swap(config),
        ExperimentKind::DepthSweep => run_depth_sweep(config),
        ExperimentKind::FeaturemapTrace => run_featuremap_trace(config),
        ExperimentKind::KernelVsSwap => run_kernel_vs_swap(config),
        ExperimentKind::KernelSizeSweep => run_kernel_size_sweep(config),
        ExperimentKind::InputFeatureCorrelation => run_input_feature_correlation(config),
        ExperimentKind::DepthImprovementTable => run_depth_improvement_table(config),
        ExperimentKind::OrdernessHistogram => run_orderness_histogram(config),
    }?;
    table.config_hash = config.hash();
    Ok(table)
}
