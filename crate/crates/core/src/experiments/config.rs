use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ExperimentError;
use crate::data::{gen_fixture, load_dataset, take_subset, Dataset, FixtureSpec};
use crate::nn::{ModelSpec, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    OrdernessVsSwap,
    DepthSweep,
    FeaturemapTrace,
    KernelVsSwap,
    KernelSizeSweep,
    InputFeatureCorrelation,
    DepthImprovementTable,
    OrdernessHistogram,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        Self::OrdernessVsSwap,
        Self::DepthSweep,
        Self::FeaturemapTrace,
        Self::KernelVsSwap,
        Self::KernelSizeSweep,
        Self::InputFeatureCorrelation,
        Self::DepthImprovementTable,
        Self::OrdernessHistogram,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::OrdernessVsSwap => "orderness_vs_swap",
            Self::DepthSweep => "depth_sweep",
            Self::FeaturemapTrace => "featuremap_trace",
            Self::KernelVsSwap => "kernel_vs_swap",
            Self::KernelSizeSweep => "kernel_size_sweep",
            Self::InputFeatureCorrelation => "input_feature_correlation",
            Self::DepthImprovementTable => "depth_improvement_table",
            Self::OrdernessHistogram => "orderness_histogram",
        }
    }

    pub fn trains(self) -> bool {
        self != Self::OrdernessVsSwap
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            let names: Vec<_> = Self::ALL.iter().map(|k| k.name()).collect();
            format!("unknown experiment '{s}' (expected one of {})", names.join(", "))
        })
    }
}

/// Where the images come from: a dataset directory or a generated fixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture: Option<FixtureSpec>,
    /// Training examples per trial (stratified). For experiments that do
    /// not train, an optional cap on the images measured.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subset: Option<usize>,
    /// Held-out validation examples per trial, disjoint from training.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_size: Option<usize>,
}

impl DatasetSpec {
    pub fn load(&self) -> Result<Dataset, ExperimentError> {
        match (&self.path, &self.fixture) {
            (Some(p), None) => Ok(load_dataset(p)?),
            (None, Some(f)) => Ok(gen_fixture(f)?),
            _ => Err(ExperimentError::Config("dataset needs exactly one of 'path' or 'fixture'".into())),
        }
    }

    /// Loads and caps to `subset` stratified images when set.
    pub fn load_capped(&self, seed: u64) -> Result<Dataset, ExperimentError> {
        let ds = self.load()?;
        match self.subset {
            Some(n) if n < ds.len() => Ok(take_subset(&ds, n, seed)?),
            _ => Ok(ds),
        }
    }

    pub fn train_size(&self) -> usize {
        self.subset.unwrap_or(1000)
    }

    pub fn val_size(&self) -> usize {
        self.val_size.unwrap_or(1000)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwapGrid {
    pub block_size: usize,
    pub n_swaps: Vec<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Mnist,
    Cifar,
}

fn default_width() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelOptions {
    /// Defaults to `cifar` for 3-channel 32x32 data, `mnist` otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arch: Option<Architecture>,
    /// Channels per conv layer and units per hidden dense layer.
    #[serde(default = "default_width")]
    pub width: usize,
    #[serde(default)]
    pub precision: Precision,
}

impl Default for ModelOptions {
    fn default() -> Self {
        Self {
            arch: None,
            width: default_width(),
            precision: Precision::F32,
        }
    }
}

impl ModelOptions {
    /// Architecture of the given depth for images of `shape`.
    pub fn spec(&self, depth: usize, shape: (usize, usize, usize), num_classes: usize) -> ModelSpec {
        let arch = self.arch.unwrap_or(if shape.0 == 3 { Architecture::Cifar } else { Architecture::Mnist });
        let mut spec = match arch {
            Architecture::Mnist => ModelSpec::mnist(depth, self.width),
            Architecture::Cifar => ModelSpec::cifar(depth, self.width),
        };
        spec.input = shape;
        spec.num_classes = num_classes;
        spec
    }
}

/// Optional replacements for [`TrainConfig`] defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe_triples: Option<usize>,
}

impl TrainOverrides {
    pub fn apply(&self, seed: u64) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            learning_rate: self.learning_rate.unwrap_or(d.learning_rate),
            epochs: self.epochs.unwrap_or(d.epochs),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            seed,
            probe_size: self.probe_size.unwrap_or(d.probe_size),
            probe_triples: self.probe_triples.unwrap_or(d.probe_triples),
            monitor: false,
            record_initial: false,
        }
    }
}

fn default_trials() -> usize {
    1
}
fn default_triples() -> usize {
    crate::metric::DEFAULT_TRIPLES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub dataset: DatasetSpec,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub swap: Option<SwapGrid>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub depths: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub kernel_sizes: Vec<usize>,
    /// Empty means every valid scale.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scales: Vec<usize>,
    /// Epochs at which the histogram experiment records channel orderness
    /// (0 is the untrained model). Empty means first and last.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub record_epochs: Vec<usize>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Triples sampled per orderness estimate of input data.
    #[serde(default = "default_triples")]
    pub triples: usize,
    #[serde(default)]
    pub model: ModelOptions,
    #[serde(default)]
    pub train: TrainOverrides,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        serde_json::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn swap_grid(&self) -> Result<&SwapGrid, ExperimentError> {
        self.swap
            .as_ref()
            .ok_or_else(|| ExperimentError::Config(format!("{} needs a 'swap' grid", self.experiment.name())))
    }

    pub fn depths_or(&self, default: &[usize]) -> Vec<usize> {
        if self.depths.is_empty() {
            default.to_vec()
        } else {
            self.depths.clone()
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if self.trials == 0 {
            return bad("trials must be >= 1".into());
        }
        if self.triples == 0 {
            return bad("triples must be >= 1".into());
        }
        if self.dataset.path.is_some() == self.dataset.fixture.is_some() {
            return bad("dataset needs exactly one of 'path' or 'fixture'".into());
        }
        if let Some(s) = &self.swap {
            if s.block_size == 0 || s.n_swaps.is_empty() {
                return bad("swap grid needs a positive block size and at least one Ns".into());
            }
        }
        if self.depths.contains(&0) || self.kernel_sizes.contains(&0) || self.scales.contains(&0) {
            return bad("depths, kernel sizes and scales must be positive".into());
        }
        if self.model.width == 0 {
            return bad("model width must be positive".into());
        }
        use ExperimentKind::*;
        match self.experiment {
            OrdernessVsSwap | DepthSweep | KernelVsSwap | InputFeatureCorrelation | DepthImprovementTable => {
                self.swap_grid()?;
            }
            KernelSizeSweep if self.kernel_sizes.is_empty() => return bad("kernel_size_sweep needs kernel_sizes".into()),
            _ => {}
        }
        if self.experiment.trains() {
            self.train.apply(0).validate()?;
            if self.dataset.train_size() == 0 || self.dataset.val_size() == 0 {
                return bad("training experiments need positive subset and val_size".into());
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DEPTH: &str = r#"{
        "experiment": "depth_sweep",
        "dataset": {"path": "data/mnist", "subset": 1000},
        "seed": 7,
        "swap": {"block_size": 6, "n_swaps": [0, 30]},
        "depths": [1, 2, 3],
        "trials": 3,
        "train": {"epochs": 20, "learning_rate": 0.05}
    }"#;

    #[test]
    fn parses_round_trips_and_hashes() {
        let c = ExperimentConfig::from_json(DEPTH).unwrap();
        assert_eq!(c.experiment, ExperimentKind::DepthSweep);
        assert_eq!(c.model.width, 64);
        assert_eq!(c.triples, 100_000);
        c.validate().unwrap();
        let again = ExperimentConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.hash(), c.hash());
        assert_eq!(c.hash().len(), 64);
        let mut other = c.clone();
        other.seed = 8;
        assert_ne!(other.hash(), c.hash());
        let tc = c.train.apply(3);
        assert_eq!((tc.epochs, tc.learning_rate, tc.batch_size, tc.seed), (20, 0.05, 32, 3));
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ExperimentConfig::from_json(&DEPTH.replace("\"trials\"", "\"trails\"")).is_err());
        assert!(ExperimentConfig::from_json(&DEPTH.replace("depth_sweep", "depth_swoop")).is_err());
        let mut c = ExperimentConfig::from_json(DEPTH).unwrap();
        c.trials = 0;
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::from_json(DEPTH).unwrap();
        c.swap = None;
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::from_json(DEPTH).unwrap();
        c.experiment = ExperimentKind::KernelSizeSweep;
        assert!(c.validate().is_err());
        assert_eq!("kernel_vs_swap".parse::<ExperimentKind>(), Ok(ExperimentKind::KernelVsSwap));
        assert!("nope".parse::<ExperimentKind>().is_err());
    }
}
