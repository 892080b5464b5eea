//! Feature-map and kernel extraction for orderness analysis.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::layers::Maps;
use super::{CnnModel, NnError, Real};
use crate::data::Dataset;
use crate::grid::{Grid2D, Image, Plane};
use crate::metric::{downsample_mean, orderness_exhaustive, MetricError};
use crate::seed::{self, Stream};

/// First `size` indices of a seeded permutation of `0..n`.
pub fn probe_indices(n: usize, size: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed::sub_rng(seed, Stream::Probe, 0));
    idx.truncate(size.min(n));
    idx
}

fn check_layer<T>(model: &CnnModel<T>, layer: usize) -> Result<(), NnError> {
    if layer >= model.conv.len() {
        return Err(NnError::LayerOutOfRange {
            layer,
            layers: model.conv.len(),
        });
    }
    Ok(())
}

/// Block outputs of every conv layer for the given examples, as one image
/// stack per layer.
pub fn feature_stacks<T: Real>(model: &CnnModel<T>, ds: &Dataset, indices: &[usize]) -> Result<Vec<Vec<Image>>, NnError> {
    let per_example = indices
        .par_iter()
        .map(|&i| {
            model
                .block_outputs(&Maps::from_image(&ds.images()[i]))
                .map(|outs| outs.iter().map(Maps::to_image).collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut stacks: Vec<Vec<Image>> = (0..model.conv.len()).map(|_| Vec::with_capacity(indices.len())).collect();
    for outs in per_example {
        for (l, img) in outs.into_iter().enumerate() {
            stacks[l].push(img);
        }
    }
    Ok(stacks)
}

/// Post-activation, post-pool output of conv block `layer` on a fixed
/// seeded probe subset of `ds`.
pub fn extract_feature_maps<T: Real>(
    model: &CnnModel<T>,
    ds: &Dataset,
    layer: usize,
    probe_size: usize,
    seed: u64,
) -> Result<Vec<Image>, NnError> {
    check_layer(model, layer)?;
    let idx = probe_indices(ds.len(), probe_size, seed);
    Ok(feature_stacks(model, ds, &idx)?.swap_remove(layer))
}

/// One `K x K` grid per `(out, in)` kernel slice of conv `layer`.
pub fn extract_kernels<T: Real>(model: &CnnModel<T>, layer: usize) -> Result<Vec<Grid2D>, NnError> {
    check_layer(model, layer)?;
    let l = &model.conv[layer];
    let k = l.kernel_size;
    Ok(l.weights
        .chunks_exact(k * k)
        .map(|w| Grid2D::new(k, k, w.iter().map(|v| v.f64()).collect()).expect("finite weights"))
        .collect())
}

/// Per-slice orderness of a set of kernels at scale `d`, `None` where the
/// slice is degenerate (e.g. constant).
pub fn slice_orderness(kernels: &[Grid2D], scale: usize) -> Result<Vec<Option<f64>>, NnError> {
    let k = kernels.first().map_or(0, |g| g.height());
    if scale == 0 || k < 3 * scale {
        return Err(NnError::KernelTooSmall { kernel_size: k, scale });
    }
    kernels
        .iter()
        .map(|g| {
            let grid = if scale == 1 { g.clone() } else { downsample_mean(g, scale)? };
            match orderness_exhaustive(&[grid]) {
                Ok((so, _)) => Ok(Some(so)),
                Err(MetricError::DegenerateDenominator) => Ok(None),
                Err(e) => Err(e.into()),
            }
        })
        .collect()
}

/// Mean orderness over the kernel slices of conv `layer` at scale `d`
/// (kernels are mean-downsampled by `d` first). Every two-hop placement of
/// a slice is enumerated; degenerate slices are skipped.
pub fn kernel_orderness_at_scale<T: Real>(model: &CnnModel<T>, layer: usize, scale: usize) -> Result<f64, NnError> {
    let per_slice = slice_orderness(&extract_kernels(model, layer)?, scale)?;
    let defined: Vec<f64> = per_slice.into_iter().flatten().collect();
    if defined.is_empty() {
        return Err(NnError::AllSlicesDegenerate { layer });
    }
    Ok(defined.iter().sum::<f64>() / defined.len() as f64)
}

pub fn kernel_orderness<T: Real>(model: &CnnModel<T>, layer: usize) -> Result<f64, NnError> {
    kernel_orderness_at_scale(model, layer, 1)
}
