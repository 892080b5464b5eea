//! Seeded stratified subsets and train/validation splits.

use rand::seq::SliceRandom;

use super::{DataError, Dataset};
use crate::seed::{self, Stream};

fn shuffled_by_class(ds: &Dataset, seed: u64) -> Vec<Vec<usize>> {
    let mut by_class = vec![Vec::new(); ds.num_classes()];
    for (i, &l) in ds.labels().iter().enumerate() {
        by_class[l as usize].push(i);
    }
    for (c, idx) in by_class.iter_mut().enumerate() {
        idx.shuffle(&mut seed::sub_rng(seed, Stream::Subset, c as u64));
    }
    by_class
}

/// Per-class quotas summing to `n`, as even as class sizes allow: every
/// class gets `n / C`, leftovers go one at a time to classes with spare
/// examples in a seeded order.
fn quotas(sizes: &[usize], n: usize, seed: u64) -> Vec<usize> {
    let mut quota = vec![0; sizes.len()];
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.shuffle(&mut seed::sub_rng(seed, Stream::Subset, u64::MAX));
    let mut remaining = n;
    while remaining > 0 {
        let open: Vec<usize> = order.iter().copied().filter(|&c| quota[c] < sizes[c]).collect();
        let share = remaining / open.len();
        if share == 0 {
            for &c in open.iter().take(remaining) {
                quota[c] += 1;
            }
            break;
        }
        for &c in &open {
            let add = share.min(sizes[c] - quota[c]);
            quota[c] += add;
            remaining -= add;
        }
    }
    quota
}

/// Stratified sample of `n` examples without replacement, in shuffled order.
pub fn take_subset(ds: &Dataset, n: usize, seed: u64) -> Result<Dataset, DataError> {
    if n > ds.len() || n == 0 {
        return Err(DataError::SubsetTooLarge {
            requested: n,
            available: ds.len(),
        });
    }
    let by_class = shuffled_by_class(ds, seed);
    let sizes: Vec<usize> = by_class.iter().map(Vec::len).collect();
    let quota = quotas(&sizes, n, seed);
    let mut picked: Vec<usize> = by_class
        .iter()
        .zip(&quota)
        .flat_map(|(idx, &q)| idx[..q].iter().copied())
        .collect();
    picked.shuffle(&mut seed::sub_rng(seed, Stream::Order, 0));
    Ok(ds
        .select(&picked)
        .with_provenance("subset_size", n)
        .with_provenance("subset_seed", seed))
}

/// Stratified split: each class contributes `round(fraction * size)`
/// examples to the first part.
pub fn split(ds: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset), DataError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(DataError::Invalid(format!("split fraction {fraction} not in (0, 1)")));
    }
    let by_class = shuffled_by_class(ds, seed::derive(seed, Stream::Split, 0));
    let mut train = Vec::new();
    let mut val = Vec::new();
    for idx in &by_class {
        let k = (fraction * idx.len() as f64).round() as usize;
        train.extend_from_slice(&idx[..k]);
        val.extend_from_slice(&idx[k..]);
    }
    if train.is_empty() || val.is_empty() {
        return Err(DataError::DegenerateSplit {
            train: train.len(),
            val: val.len(),
        });
    }
    train.shuffle(&mut seed::sub_rng(seed, Stream::Order, 1));
    val.shuffle(&mut seed::sub_rng(seed, Stream::Order, 2));
    Ok((
        ds.select(&train).with_provenance("split", "train").with_provenance("split_seed", seed),
        ds.select(&val).with_provenance("split", "val").with_provenance("split_seed", seed),
    ))
}

/// One seed per repeated trial, derived from a master seed.
pub fn trial_seeds(master: u64, trials: usize) -> Vec<u64> {
    (0..trials as u64).map(|t| seed::derive(master, Stream::Trial, t)).collect()
}
