//! IDX files (MNIST / Fashion-MNIST layout), plain or gzip-compressed.
//!
//! Header: big-endian magic `[0, 0, type, ndims]` followed by `ndims`
//! big-endian `u32` sizes. Images are read from type `0x08` (unsigned
//! bytes, scaled by 1/255) or `0x0E` (f64, stored as-is), with 3 dims
//! `(n, rows, cols)` or 4 dims `(n, channels, rows, cols)`.

use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::MultiGzDecoder;

use super::{io_err, DataError, Dataset, Provenance};
use crate::grid::Image;

pub const IMAGE_MAGIC_U8: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

const TYPE_U8: u8 = 0x08;
const TYPE_F64: u8 = 0x0E;

pub(crate) fn read_maybe_gz(path: &Path) -> Result<Vec<u8>, DataError> {
    let raw = fs::read(path).map_err(io_err(path))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        MultiGzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(io_err(path))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

struct Header {
    magic: u32,
    dims: Vec<usize>,
    data_offset: usize,
}

fn header(bytes: &[u8], path: &Path) -> Result<Header, DataError> {
    let truncated = |expected| DataError::TruncatedFile {
        path: path.to_path_buf(),
        expected,
        actual: bytes.len(),
    };
    if bytes.len() < 4 {
        return Err(truncated(4));
    }
    let magic = be_u32(bytes, 0);
    let ndims = bytes[3] as usize;
    let data_offset = 4 + 4 * ndims;
    if bytes.len() < data_offset {
        return Err(truncated(data_offset));
    }
    let dims = (0..ndims).map(|i| be_u32(bytes, 4 + 4 * i) as usize).collect();
    Ok(Header {
        magic,
        dims,
        data_offset,
    })
}

fn check_len(bytes: &[u8], expected: usize, path: &Path) -> Result<(), DataError> {
    use std::cmp::Ordering;
    match bytes.len().cmp(&expected) {
        Ordering::Equal => Ok(()),
        Ordering::Less => Err(DataError::TruncatedFile {
            path: path.to_path_buf(),
            expected,
            actual: bytes.len(),
        }),
        Ordering::Greater => Err(DataError::Invalid(format!(
            "{}: {} trailing bytes",
            path.display(),
            bytes.len() - expected
        ))),
    }
}

pub(crate) fn parse_images(bytes: &[u8], path: &Path) -> Result<Vec<Image>, DataError> {
    let h = header(bytes, path)?;
    let dtype = ((h.magic >> 8) & 0xff) as u8;
    let valid = (h.magic >> 16) == 0 && matches!(dtype, TYPE_U8 | TYPE_F64) && matches!(h.dims.len(), 3 | 4);
    if !valid {
        return Err(DataError::BadMagic {
            path: path.to_path_buf(),
            expected: "0x00000803 (or 0x00000804 / 0x00000e03 / 0x00000e04)",
            found: h.magic,
        });
    }
    let (n, c, rows, cols) = match h.dims[..] {
        [n, r, c] => (n, 1, r, c),
        [n, ch, r, c] => (n, ch, r, c),
        _ => unreachable!(),
    };
    let per_image = c * rows * cols;
    let width = if dtype == TYPE_U8 { 1 } else { 8 };
    check_len(bytes, h.data_offset + n * per_image * width, path)?;
    let body = &bytes[h.data_offset..];
    (0..n)
        .map(|i| {
            let data: Vec<f64> = if dtype == TYPE_U8 {
                body[i * per_image..(i + 1) * per_image]
                    .iter()
                    .map(|&b| b as f64 / 255.0)
                    .collect()
            } else {
                body[i * per_image * 8..(i + 1) * per_image * 8]
                    .chunks_exact(8)
                    .map(|b| f64::from_be_bytes(b.try_into().expect("8 bytes")))
                    .collect()
            };
            Image::new(c, rows, cols, data).map_err(|e| DataError::Invalid(format!("{}: image {i}: {e}", path.display())))
        })
        .collect()
}

pub(crate) fn parse_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>, DataError> {
    let h = header(bytes, path)?;
    if h.magic != LABEL_MAGIC {
        return Err(DataError::BadMagic {
            path: path.to_path_buf(),
            expected: "0x00000801",
            found: h.magic,
        });
    }
    let n = h.dims[0];
    check_len(bytes, h.data_offset + n, path)?;
    Ok(bytes[h.data_offset..].to_vec())
}

/// Loads an image file and its label file into a dataset.
/// `num_classes` is `max(label) + 1`.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset, DataError> {
    let images = parse_images(&read_maybe_gz(images_path)?, images_path)?;
    let labels = parse_labels(&read_maybe_gz(labels_path)?, labels_path)?;
    if images.len() != labels.len() {
        return Err(DataError::CountMismatch {
            images: images.len(),
            labels: labels.len(),
        });
    }
    let num_classes = labels.iter().copied().max().map_or(1, |m| m as usize + 1);
    let mut prov = Provenance::new();
    prov.insert("source".into(), images_path.display().to_string().into());
    prov.insert("format".into(), "idx".into());
    Dataset::new(images, labels, num_classes, prov)
}

/// Encodes images as IDX. With `as_bytes`, every value must be an exact
/// multiple of 1/255.
pub(crate) fn encode_images(images: &[Image], as_bytes: bool) -> Vec<u8> {
    let (c, h, w) = images.first().map_or((1, 0, 0), Image::shape);
    let dtype = if as_bytes { TYPE_U8 } else { TYPE_F64 };
    let dims: Vec<u32> = if c == 1 {
        vec![images.len() as u32, h as u32, w as u32]
    } else {
        vec![images.len() as u32, c as u32, h as u32, w as u32]
    };
    let mut out = vec![0, 0, dtype, dims.len() as u8];
    for d in dims {
        out.extend_from_slice(&d.to_be_bytes());
    }
    for img in images {
        for &v in img.data() {
            if as_bytes {
                out.push((v * 255.0).round() as u8);
            } else {
                out.extend_from_slice(&v.to_be_bytes());
            }
        }
    }
    out
}

pub(crate) fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = LABEL_MAGIC.to_be_bytes().to_vec();
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}
