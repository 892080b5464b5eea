//! CIFAR-10 binary batches: records of one label byte followed by 3072
//! pixel bytes, channel-planar R, G, B, each plane 32x32 row-major.

use std::fs;
use std::path::Path;

use super::{io_err, DataError, Dataset, Provenance};
use crate::grid::Image;

pub const CIFAR_RECORD_BYTES: usize = 1 + 3 * 32 * 32;
const MAX_LABEL: u8 = 9;

pub fn load_cifar10<P: AsRef<Path>>(batch_paths: &[P]) -> Result<Dataset, DataError> {
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for path in batch_paths {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(io_err(path))?;
        if bytes.is_empty() || bytes.len() % CIFAR_RECORD_BYTES != 0 {
            return Err(DataError::TruncatedFile {
                path: path.to_path_buf(),
                expected: bytes.len().div_ceil(CIFAR_RECORD_BYTES).max(1) * CIFAR_RECORD_BYTES,
                actual: bytes.len(),
            });
        }
        for record in bytes.chunks_exact(CIFAR_RECORD_BYTES) {
            let label = record[0];
            if label > MAX_LABEL {
                return Err(DataError::LabelOutOfRange {
                    path: path.to_path_buf(),
                    label,
                    max: MAX_LABEL,
                });
            }
            let data = record[1..].iter().map(|&b| b as f64 / 255.0).collect();
            images.push(Image::new(3, 32, 32, data).expect("fixed record shape"));
            labels.push(label);
        }
    }
    let mut prov = Provenance::new();
    prov.insert(
        "source".into(),
        batch_paths
            .iter()
            .map(|p| p.as_ref().display().to_string())
            .collect::<Vec<_>>()
            .join(",")
            .into(),
    );
    prov.insert("format".into(), "cifar10".into());
    Dataset::new(images, labels, 10, prov)
}
