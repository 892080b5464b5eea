//! Random block swapping.
//!
//! An image is tiled from the top-left into `k x k` blocks (the bottom and
//! right margins left over by `dim mod k` are never touched). Each of the
//! `Ns` iterations picks an unordered pair of distinct blocks uniformly at
//! random and exchanges their contents across all channels. Pairs may
//! repeat between iterations.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Dataset;
use crate::grid::Image;
use crate::seed::{self, Stream};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SwapError {
    #[error("block size must be positive")]
    ZeroBlockSize,
    #[error("{height}x{width} image holds {blocks} block(s) of size {k}; swapping needs at least 2")]
    TooFewBlocks {
        height: usize,
        width: usize,
        k: usize,
        blocks: usize,
    },
    #[error("image {index}: {source}")]
    AtImage {
        index: usize,
        #[source]
        source: Box<SwapError>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwapSpec {
    pub block_size: usize,
    pub n_swaps: usize,
    pub seed: u64,
}

/// Applies `spec.n_swaps` random block exchanges to `image`.
pub fn block_swap(image: &Image, spec: &SwapSpec) -> Result<Image, SwapError> {
    let k = spec.block_size;
    if k == 0 {
        return Err(SwapError::ZeroBlockSize);
    }
    let mut out = image.clone();
    if spec.n_swaps == 0 {
        return Ok(out);
    }
    let (channels, h, w) = image.shape();
    let (rows, cols) = (h / k, w / k);
    let blocks = rows * cols;
    if blocks < 2 {
        return Err(SwapError::TooFewBlocks {
            height: h,
            width: w,
            k,
            blocks,
        });
    }
    let mut rng = seed::rng(spec.seed);
    let data = out.data_mut();
    let plane = h * w;
    for _ in 0..spec.n_swaps {
        let a = rng.random_range(0..blocks);
        let mut b = rng.random_range(0..blocks - 1);
        if b >= a {
            b += 1;
        }
        let (ar, ac) = ((a / cols) * k, (a % cols) * k);
        let (br, bc) = ((b / cols) * k, (b % cols) * k);
        for c in 0..channels {
            for dr in 0..k {
                let ra = c * plane + (ar + dr) * w + ac;
                let rb = c * plane + (br + dr) * w + bc;
                for dc in 0..k {
                    data.swap(ra + dc, rb + dc);
                }
            }
        }
    }
    Ok(out)
}

/// Swaps every image with its own substream of `spec.seed`. Labels and
/// order are kept; provenance records `k`, `Ns`, `seed` and the source.
pub fn swap_dataset(ds: &Dataset, spec: &SwapSpec) -> Result<Dataset, SwapError> {
    let swapped = ds
        .images()
        .par_iter()
        .enumerate()
        .map(|(index, img)| {
            let per_image = SwapSpec {
                seed: seed::derive(spec.seed, Stream::Image, index as u64),
                ..*spec
            };
            block_swap(img, &per_image).map_err(|e| SwapError::AtImage {
                index,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let source = ds
        .provenance()
        .get("source")
        .cloned()
        .unwrap_or_else(|| "unknown".into());
    let out = ds
        .map_images(|i, _| Ok(swapped[i].clone()))
        .expect("swaps preserve shape and value range");
    Ok(out
        .with_provenance("source", source)
        .with_provenance("k", spec.block_size)
        .with_provenance("Ns", spec.n_swaps)
        .with_provenance("seed", spec.seed))
}
