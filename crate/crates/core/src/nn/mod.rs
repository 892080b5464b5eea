//! A small CNN engine: conv / ReLU / 2x2 max-pool blocks, dense layers,
//! softmax cross-entropy and plain mini-batch SGD, generic over `f32` and
//! `f64`. Feature maps and kernels can be pulled out for orderness
//! analysis.

mod layers;
mod model;
mod probe;
mod real;
mod train;

use thiserror::Error;

pub use layers::{conv2d_forward, conv_out, maxpool2x2_forward, ConvLayer, DenseLayer, Maps, Padding};
pub use model::{loss_softmax_ce, Cache, CnnModel, ConvSpec, Gradients, ModelSpec};
pub use probe::{
    extract_feature_maps, extract_kernels, feature_stacks, kernel_orderness, kernel_orderness_at_scale, probe_indices,
    slice_orderness,
};
pub use real::Real;
pub use train::{batch_gradient, epoch_record, evaluate, predictions, train, EpochRecord, TrainConfig, TrainingLog};

use crate::metric::MetricError;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("conv layer {layer} does not exist (model has {layers})")]
    LayerOutOfRange { layer: usize, layers: usize },
    #[error("kernel of size {kernel_size} is too small for orderness at scale {scale} (needs >= {})", 3 * .scale)]
    KernelTooSmall { kernel_size: usize, scale: usize },
    #[error("every kernel slice of layer {layer} is degenerate")]
    AllSlicesDegenerate { layer: usize },
    #[error("loss diverged in epoch {epoch}, batch {batch}")]
    DivergedLoss {
        epoch: usize,
        batch: usize,
        log: Box<TrainingLog>,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
}
