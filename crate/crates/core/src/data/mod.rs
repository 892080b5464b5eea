//! Datasets: ingestion, snapshots, subsets and synthetic fixtures.

mod cifar;
mod fixtures;
mod idx;
mod snapshot;
mod subset;

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde_json::Value;
use thiserror::Error;

use crate::grid::Image;

pub use cifar::{load_cifar10, CIFAR_RECORD_BYTES};
pub use fixtures::{gen_fixture, FixtureKind, FixtureSpec};
pub use idx::{load_idx, IMAGE_MAGIC_U8, LABEL_MAGIC};
pub use snapshot::{load_dataset, load_snapshot, write_snapshot, PixelEncoding};
pub use subset::{split, take_subset, trial_seeds};

pub type Provenance = BTreeMap<String, Value>;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: bad magic number 0x{found:08x} (expected {expected})")]
    BadMagic {
        path: PathBuf,
        expected: &'static str,
        found: u32,
    },
    #[error("{path}: truncated file ({actual} bytes, expected {expected})")]
    TruncatedFile {
        path: PathBuf,
        expected: usize,
        actual: usize,
    },
    #[error("image file holds {images} items but label file holds {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("{path}: label {label} out of range (max {max})")]
    LabelOutOfRange { path: PathBuf, label: u8, max: u8 },
    #[error("requested {requested} examples but only {available} exist")]
    SubsetTooLarge { requested: usize, available: usize },
    #[error("split leaves an empty side ({train} train / {val} validation)")]
    DegenerateSplit { train: usize, val: usize },
    #[error("{path}: no recognised dataset layout")]
    UnknownSource { path: PathBuf },
    #[error("invalid dataset: {0}")]
    Invalid(String),
}

/// Labelled images sharing one `(channels, height, width)` shape, with
/// pixel values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    images: Vec<Image>,
    labels: Vec<u8>,
    num_classes: usize,
    provenance: Provenance,
}

impl Dataset {
    pub fn new(
        images: Vec<Image>,
        labels: Vec<u8>,
        num_classes: usize,
        provenance: Provenance,
    ) -> Result<Self, DataError> {
        if images.len() != labels.len() {
            return Err(DataError::CountMismatch {
                images: images.len(),
                labels: labels.len(),
            });
        }
        if num_classes == 0 {
            return Err(DataError::Invalid("num_classes must be positive".into()));
        }
        if let Some(l) = labels.iter().find(|&&l| l as usize >= num_classes) {
            return Err(DataError::Invalid(format!(
                "label {l} outside 0..{num_classes}"
            )));
        }
        if let Some(first) = images.first() {
            let shape = first.shape();
            if shape.0 != 1 && shape.0 != 3 {
                return Err(DataError::Invalid(format!("{} channels", shape.0)));
            }
            for (i, img) in images.iter().enumerate() {
                if img.shape() != shape {
                    return Err(DataError::Invalid(format!(
                        "image {i} has shape {:?}, expected {shape:?}",
                        img.shape()
                    )));
                }
                if img.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(DataError::Invalid(format!(
                        "image {i} has values outside [0, 1]"
                    )));
                }
            }
        }
        Ok(Self {
            images,
            labels,
            num_classes,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }
    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
    pub fn images(&self) -> &[Image] {
        &self.images
    }
    pub fn labels(&self) -> &[u8] {
        &self.labels
    }
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }
    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// `(channels, height, width)`, or `None` for an empty dataset.
    pub fn shape(&self) -> Option<(usize, usize, usize)> {
        self.images.first().map(Image::shape)
    }

    pub fn with_provenance(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.provenance.insert(key.to_string(), value.into());
        self
    }

    /// The examples at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            provenance: self.provenance.clone(),
        }
    }

    /// Replaces every image through `f` (shape and value checks re-run).
    pub fn map_images(
        &self,
        mut f: impl FnMut(usize, &Image) -> Result<Image, DataError>,
    ) -> Result<Dataset, DataError> {
        let images = self
            .images
            .iter()
            .enumerate()
            .map(|(i, img)| f(i, img))
            .collect::<Result<Vec<_>, _>>()?;
        Dataset::new(images, self.labels.clone(), self.num_classes, self.provenance.clone())
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }
}

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> DataError {
    let path = path.into();
    move |source| DataError::Io { path, source }
}
