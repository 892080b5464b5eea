//! On-disk dataset snapshots and source auto-detection.
//!
//! A snapshot directory holds `images.idx`, `labels.idx` and
//! `provenance.json`. Images are stored as unsigned bytes when every value
//! is an exact multiple of 1/255 (lossless), otherwise as f64.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;

use super::idx::{encode_images, encode_labels, parse_images, parse_labels, read_maybe_gz};
use super::{io_err, load_cifar10, load_idx, DataError, Dataset, Provenance};
use crate::io::atomic_write;

pub const IMAGES_FILE: &str = "images.idx";
pub const LABELS_FILE: &str = "labels.idx";
pub const PROVENANCE_FILE: &str = "provenance.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PixelEncoding {
    U8,
    F64,
}

fn byte_exact(v: f64) -> bool {
    let b = (v * 255.0).round();
    (0.0..=255.0).contains(&b) && b / 255.0 == v
}

pub fn preferred_encoding(ds: &Dataset) -> PixelEncoding {
    if ds.images().iter().all(|i| i.data().iter().all(|&v| byte_exact(v))) {
        PixelEncoding::U8
    } else {
        PixelEncoding::F64
    }
}

pub fn write_snapshot(dir: &Path, ds: &Dataset) -> Result<(), DataError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let as_bytes = preferred_encoding(ds) == PixelEncoding::U8;
    let images = dir.join(IMAGES_FILE);
    atomic_write(&images, &encode_images(ds.images(), as_bytes)).map_err(io_err(&images))?;
    let labels = dir.join(LABELS_FILE);
    atomic_write(&labels, &encode_labels(ds.labels())).map_err(io_err(&labels))?;
    let mut prov = ds.provenance().clone();
    prov.insert("num_classes".into(), ds.num_classes().into());
    let text = serde_json::to_string_pretty(&prov).expect("provenance serializes") + "\n";
    let p = dir.join(PROVENANCE_FILE);
    atomic_write(&p, text.as_bytes()).map_err(io_err(&p))
}

pub fn load_snapshot(dir: &Path) -> Result<Dataset, DataError> {
    let ip = dir.join(IMAGES_FILE);
    let lp = dir.join(LABELS_FILE);
    let images = parse_images(&read_maybe_gz(&ip)?, &ip)?;
    let labels = parse_labels(&read_maybe_gz(&lp)?, &lp)?;
    if images.len() != labels.len() {
        return Err(DataError::CountMismatch {
            images: images.len(),
            labels: labels.len(),
        });
    }
    let pp = dir.join(PROVENANCE_FILE);
    let mut prov: Provenance = match fs::read_to_string(&pp) {
        Ok(text) => serde_json::from_str(&text)
            .map_err(|e| DataError::Invalid(format!("{}: {e}", pp.display())))?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Provenance::new(),
        Err(e) => return Err(io_err(&pp)(e)),
    };
    let num_classes = match prov.remove("num_classes") {
        Some(Value::Number(n)) => n.as_u64().unwrap_or(1) as usize,
        _ => labels.iter().copied().max().map_or(1, |m| m as usize + 1),
    };
    Dataset::new(images, labels, num_classes, prov)
}

fn first_existing(dir: &Path, names: &[&str]) -> Option<PathBuf> {
    names.iter().map(|n| dir.join(n)).find(|p| p.is_file())
}

/// Loads a dataset directory: a snapshot, an MNIST-style training set
/// (`train-images-idx3-ubyte[.gz]` + labels) or CIFAR-10 training batches.
pub fn load_dataset(path: &Path) -> Result<Dataset, DataError> {
    if !path.is_dir() {
        return Err(DataError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "dataset directory not found"),
        });
    }
    if path.join(IMAGES_FILE).is_file() {
        return load_snapshot(path);
    }
    if let (Some(images), Some(labels)) = (
        first_existing(path, &["train-images-idx3-ubyte", "train-images-idx3-ubyte.gz", "train-images.idx3-ubyte"]),
        first_existing(path, &["train-labels-idx1-ubyte", "train-labels-idx1-ubyte.gz", "train-labels.idx1-ubyte"]),
    ) {
        return load_idx(&images, &labels);
    }
    let batches: Vec<PathBuf> = (1..=5)
        .map(|i| path.join(format!("data_batch_{i}.bin")))
        .filter(|p| p.is_file())
        .collect();
    if !batches.is_empty() {
        return load_cifar10(&batches);
    }
    Err(DataError::UnknownSource {
        path: path.to_path_buf(),
    })
}
