//! Spatial orderness of 2D data.
//!
//! The crate measures how strongly the values of a set of 2D grids follow
//! their spatial arrangement, at one or many scales, and provides the
//! tooling needed to probe that statistic experimentally:
//!
//! - [`metric`]: the orderness estimator built on sampled two-hop triples,
//!   mean downsampling and per-channel averaging.
//! - [`corruption`]: random block swapping, which destroys order at a chosen
//!   scale.
//! - [`data`]: IDX / CIFAR-10 ingestion, stratified subsets and splits,
//!   dataset snapshots, synthetic calibration fixtures.
//! - [`nn`]: a small CNN engine (forward, backprop, plain SGD) with hooks to
//!   pull feature maps and kernels out for analysis.
//! - [`experiments`]: declarative experiment configs producing CSV tables.
//!
//! Every random choice is driven by a 64-bit master seed split into
//! independent substreams (see [`seed`]), so results are reproducible
//! bit-for-bit.

pub mod corruption;
pub mod data;
pub mod experiments;
pub mod grid;
pub mod io;
pub mod metric;
pub mod nn;
pub mod seed;
pub mod stats;

pub use grid::{Grid2D, GridView, Image, Plane};
pub use metric::{HopStats, MetricError, OrdernessProfile, TwoHopTriple};
