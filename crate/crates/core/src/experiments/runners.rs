use std::collections::BTreeMap;

use super::{Cell, DatasetSpec, ExperimentConfig, ExperimentError, ModelOptions, Precision, ResultTable};
use crate::corruption::{swap_dataset, SwapSpec};
use crate::data::{split, take_subset, trial_seeds, Dataset};
use crate::metric::{channel_profiles, max_valid_scale};
use crate::nn::{
    epoch_record, kernel_orderness, train, EpochRecord, ModelSpec, NnError, Real, TrainConfig, TrainingLog,
};
use crate::seed::{self, Stream};
use crate::stats::{mean, pearson, spearman};

type Result<T> = std::result::Result<T, ExperimentError>;

pub(super) struct TrialData {
    pub index: usize,
    pub seed: u64,
    pub train: Dataset,
    pub val: Dataset,
}

/// Disjoint stratified train / validation sets for every trial.
pub(super) fn split_trials(spec: &DatasetSpec, ds: &Dataset, master: u64, trials: usize) -> Result<Vec<TrialData>> {
    let (n, v) = (spec.train_size(), spec.val_size());
    trial_seeds(master, trials)
        .into_iter()
        .enumerate()
        .map(|(index, ts)| {
            let pool = take_subset(ds, n + v, seed::derive(ts, Stream::Split, 0))?;
            let (train, val) = split(&pool, n as f64 / (n + v) as f64, seed::derive(ts, Stream::Split, 1))?;
            Ok(TrialData {
                index,
                seed: ts,
                train,
                val,
            })
        })
        .collect()
}

fn trial_splits(cfg: &ExperimentConfig, ds: &Dataset) -> Result<Vec<TrialData>> {
    split_trials(&cfg.dataset, ds, cfg.seed, cfg.trials)
}

fn swapped(ds: &Dataset, block_size: usize, n_swaps: usize, seed: u64) -> Result<Dataset> {
    Ok(swap_dataset(
        ds,
        &SwapSpec {
            block_size,
            n_swaps,
            seed,
        },
    )?)
}

fn shape_of(ds: &Dataset) -> Result<(usize, usize, usize)> {
    ds.shape().ok_or_else(|| ExperimentError::Config("empty dataset".into()))
}

fn model_spec(opts: &ModelOptions, depth: usize, ds: &Dataset) -> Result<ModelSpec> {
    Ok(opts.spec(depth, shape_of(ds)?, ds.num_classes().max(2)))
}

/// Mean orderness over channels at each scale of `scales`.
fn input_orderness(ds: &Dataset, scales: &[usize], triples: usize, seed: u64) -> Result<Vec<f64>> {
    let profiles = channel_profiles(ds.images(), scales, triples, seed)?;
    Ok((0..scales.len())
        .map(|i| mean(&profiles.iter().map(|p| p.entries[i].so).collect::<Vec<_>>()))
        .collect())
}

struct Fit {
    val_error: f64,
    final_loss: f64,
    /// Final feature-map and kernel orderness (feature maps only when
    /// requested).
    last: EpochRecord,
    init_kernel_so: Vec<f64>,
    log: TrainingLog,
}

struct FitPlan<'a> {
    spec: ModelSpec,
    init_seed: u64,
    train_seed: u64,
    train: &'a Dataset,
    val: &'a Dataset,
    /// Measure orderness after every epoch and at epoch 0.
    trace: bool,
    /// Measure feature-map orderness of the trained model.
    final_features: bool,
}

fn kernel_profile<T: Real>(model: &crate::nn::CnnModel<T>) -> Vec<f64> {
    (0..model.depth())
        .map(|l| kernel_orderness(model, l).unwrap_or(f64::NAN))
        .collect()
}

fn fit_as<T: Real>(cfg: &ExperimentConfig, plan: &FitPlan) -> Result<Fit> {
    let mut model = plan.spec.build::<T>(plan.init_seed)?;
    let init_kernel_so = kernel_profile(&model);
    let mut tc: TrainConfig = cfg.train.apply(plan.train_seed);
    tc.monitor = plan.trace;
    tc.record_initial = plan.trace;
    let log = train(&mut model, plan.train, Some(plan.val), &tc)?;
    let last_logged = log.last().expect("at least one epoch").clone();
    let mut last = if plan.final_features && !plan.trace {
        tc.monitor = true;
        epoch_record(&model, plan.train, Some(plan.val), &tc, tc.epochs, last_logged.loss)?
    } else {
        last_logged
    };
    last.kernel_so = kernel_profile(&model);
    Ok(Fit {
        val_error: 1.0 - last.val_acc,
        final_loss: last.loss,
        last,
        init_kernel_so,
        log,
    })
}

fn fit(cfg: &ExperimentConfig, plan: &FitPlan) -> Result<Fit> {
    match cfg.model.precision {
        Precision::F32 => fit_as::<f32>(cfg, plan),
        Precision::F64 => fit_as::<f64>(cfg, plan),
    }
}

fn means_by<K: Ord + Copy>(pairs: impl IntoIterator<Item = (K, f64)>) -> BTreeMap<K, f64> {
    let mut groups: BTreeMap<K, Vec<f64>> = BTreeMap::new();
    for (k, v) in pairs {
        groups.entry(k).or_default().push(v);
    }
    groups.into_iter().map(|(k, v)| (k, mean(&v))).collect()
}

/// Multi-scale orderness for every Ns of the swap grid.
pub fn run_orderness_vs_swap(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let grid = cfg.swap_grid()?;
    let ds = cfg.dataset.load_capped(seed::derive(cfg.seed, Stream::Subset, 0))?;
    let (_, h, w) = shape_of(&ds)?;
    let scales: Vec<usize> = if cfg.scales.is_empty() {
        (1..=max_valid_scale(h, w)).collect()
    } else {
        cfg.scales.clone()
    };
    let metric_seed = seed::derive(cfg.seed, Stream::Probe, 0);
    let swap_seed = seed::derive(cfg.seed, Stream::Swap, 0);
    let mut t = ResultTable::new("orderness_vs_swap", &["ns", "scale", "so", "d_one", "d_two", "n_triples"]);
    let mut so = BTreeMap::new();
    for &ns in &grid.n_swaps {
        let sw = swapped(&ds, grid.block_size, ns, swap_seed)?;
        let profiles = channel_profiles(sw.images(), &scales, cfg.triples, metric_seed)?;
        for (i, &a) in scales.iter().enumerate() {
            let pick = |f: &dyn Fn(&crate::metric::ProfileEntry) -> f64| {
                mean(&profiles.iter().map(|p| f(&p.entries[i])).collect::<Vec<_>>())
            };
            let v = pick(&|e| e.so);
            so.insert((ns, a), v);
            t.push(vec![
                ns.into(),
                a.into(),
                v.into(),
                pick(&|e| e.stats.d_one).into(),
                pick(&|e| e.stats.d_two).into(),
                profiles[0].entries[i].stats.n_triples.into(),
            ]);
        }
    }
    let (base, top) = (grid.n_swaps[0], *grid.n_swaps.last().expect("validated"));
    let k = grid.block_size;
    for a in [1, k] {
        if let (Some(s0), Some(s1)) = (so.get(&(base, a)), so.get(&(top, a))) {
            t.set(format!("rel_drop_scale{a}"), (s0 - s1) / s0);
        }
        let pts: Vec<(f64, f64)> = grid.n_swaps.iter().filter_map(|&ns| so.get(&(ns, a)).map(|&v| (ns as f64, v))).collect();
        if pts.len() == grid.n_swaps.len() {
            let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
            t.set(format!("spearman_ns_so_scale{a}"), spearman(&x, &y));
        }
    }
    let (first, last) = (scales[0], *scales.last().expect("non-empty"));
    t.set("base_so_first_scale", so[&(base, first)]);
    t.set("base_so_last_scale", so[&(base, last)]);
    t.set("base_last_to_first_ratio", so[&(base, last)] / so[&(base, first)]);
    Ok(t)
}

pub(super) fn depth_seed(trial_seed: u64, key: usize) -> u64 {
    seed::derive(trial_seed, Stream::Init, key as u64)
}

pub(super) fn train_seed(trial_seed: u64) -> u64 {
    seed::derive(trial_seed, Stream::Order, 0)
}

fn swap_seed(trial_seed: u64) -> u64 {
    seed::derive(trial_seed, Stream::Swap, 0)
}

/// Validation error of networks of each depth trained on each swapped set.
pub fn run_depth_sweep(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let grid = cfg.swap_grid()?;
    let depths = cfg.depths_or(&[1, 2, 3]);
    let ds = cfg.dataset.load()?;
    let mut results = BTreeMap::new();
    for trial in trial_splits(cfg, &ds)? {
        for &ns in &grid.n_swaps {
            let tr = swapped(&trial.train, grid.block_size, ns, swap_seed(trial.seed))?;
            let va = swapped(&trial.val, grid.block_size, ns, seed::derive(swap_seed(trial.seed), Stream::Split, 1))?;
            for &d in &depths {
                let f = fit(
                    cfg,
                    &FitPlan {
                        spec: model_spec(&cfg.model, d, &tr)?,
                        init_seed: depth_seed(trial.seed, d),
                        train_seed: train_seed(trial.seed),
                        train: &tr,
                        val: &va,
                        trace: false,
                        final_features: false,
                    },
                )?;
                results.insert((ns, d, trial.index), (f.val_error, f.final_loss));
            }
        }
    }
    let mut t = ResultTable::new("depth_sweep", &["ns", "depth", "trial", "val_error", "train_loss"]);
    for &ns in &grid.n_swaps {
        for &d in &depths {
            for i in 0..cfg.trials {
                let (e, l) = results[&(ns, d, i)];
                t.push(vec![ns.into(), d.into(), i.into(), e.into(), l.into()]);
            }
        }
    }
    let means = means_by(results.iter().map(|(&(ns, d, _), &(e, _))| ((ns, d), e)));
    for &ns in &grid.n_swaps {
        for &d in &depths {
            t.set(format!("mean_val_error_ns{ns}_depth{d}"), means[&(ns, d)]);
        }
        for pair in depths.windows(2) {
            t.set(
                format!("improvement_ns{ns}_depth{}_to_{}", pair[0], pair[1]),
                means[&(ns, pair[0])] - means[&(ns, pair[1])],
            );
        }
    }
    Ok(t)
}

/// Per-epoch feature-map orderness of every layer while training.
pub fn run_featuremap_trace(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let depth = cfg.depths_or(&[3]).into_iter().max().expect("non-empty");
    let ds = cfg.dataset.load()?;
    let mut t = ResultTable::new(
        "featuremap_trace",
        &["trial", "epoch", "layer", "fm_so", "kernel_so", "val_acc", "loss"],
    );
    let mut last_layer: Vec<(usize, f64)> = Vec::new();
    for trial in trial_splits(cfg, &ds)? {
        let f = fit(
            cfg,
            &FitPlan {
                spec: model_spec(&cfg.model, depth, &trial.train)?,
                init_seed: depth_seed(trial.seed, depth),
                train_seed: train_seed(trial.seed),
                train: &trial.train,
                val: &trial.val,
                trace: true,
                final_features: true,
            },
        )?;
        for r in f.log.initial.iter().chain(&f.log.records) {
            for l in 0..depth {
                t.push(vec![
                    trial.index.into(),
                    r.epoch.into(),
                    (l + 1).into(),
                    r.fm_so[l].into(),
                    r.kernel_so[l].into(),
                    r.val_acc.into(),
                    r.loss.into(),
                ]);
            }
            last_layer.push((r.epoch, r.fm_so[depth - 1]));
        }
    }
    let by_epoch = means_by(last_layer);
    let epochs = cfg.train.apply(0).epochs;
    let (peak_epoch, peak) = by_epoch
        .iter()
        .filter(|(&e, _)| e >= 1)
        .fold((0, f64::NEG_INFINITY), |acc, (&e, &v)| if v > acc.1 { (e, v) } else { acc });
    t.set("epochs", epochs as f64);
    t.set("last_layer_initial_fm_so", by_epoch[&0]);
    t.set("last_layer_final_fm_so", by_epoch[&epochs]);
    t.set("last_layer_peak_fm_so", peak);
    t.set("last_layer_peak_epoch", peak_epoch as f64);
    Ok(t)
}

/// Layer-1 kernel orderness after training on each swapped set.
pub fn run_kernel_vs_swap(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let grid = cfg.swap_grid()?;
    let depth = cfg.depths_or(&[3])[0];
    let ds = cfg.dataset.load()?;
    let mut results = BTreeMap::new();
    for trial in trial_splits(cfg, &ds)? {
        for &ns in &grid.n_swaps {
            let tr = swapped(&trial.train, grid.block_size, ns, swap_seed(trial.seed))?;
            let va = swapped(&trial.val, grid.block_size, ns, seed::derive(swap_seed(trial.seed), Stream::Split, 1))?;
            let f = fit(
                cfg,
                &FitPlan {
                    spec: model_spec(&cfg.model, depth, &tr)?,
                    init_seed: depth_seed(trial.seed, depth),
                    train_seed: train_seed(trial.seed),
                    train: &tr,
                    val: &va,
                    trace: false,
                    final_features: false,
                },
            )?;
            results.insert((ns, trial.index), (f.last.kernel_so[0], f.init_kernel_so[0], f.val_error));
        }
    }
    let mut t = ResultTable::new("kernel_vs_swap", &["ns", "trial", "kernel_so", "init_kernel_so", "val_error"]);
    for &ns in &grid.n_swaps {
        for i in 0..cfg.trials {
            let (k, k0, e) = results[&(ns, i)];
            t.push(vec![ns.into(), i.into(), k.into(), k0.into(), e.into()]);
        }
    }
    let means = means_by(results.iter().map(|(&(ns, _), &(k, _, _))| (ns, k)));
    for (ns, m) in &means {
        t.set(format!("mean_kernel_so_ns{ns}"), *m);
    }
    let init: Vec<f64> = results.values().map(|r| r.1).collect();
    t.set("mean_init_kernel_so", mean(&init));
    let (x, y): (Vec<f64>, Vec<f64>) = grid.n_swaps.iter().map(|&ns| (ns as f64, means[&ns])).unzip();
    t.set("spearman_ns_kernel_so", spearman(&x, &y));
    Ok(t)
}

/// Layer-1 kernel orderness as a function of the first kernel size.
pub fn run_kernel_size_sweep(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let depth = cfg.depths_or(&[3])[0];
    let ds = cfg.dataset.load()?;
    let mut results = BTreeMap::new();
    for trial in trial_splits(cfg, &ds)? {
        for &k in &cfg.kernel_sizes {
            let f = fit(
                cfg,
                &FitPlan {
                    spec: model_spec(&cfg.model, depth, &trial.train)?.with_first_kernel(k),
                    init_seed: depth_seed(trial.seed, depth),
                    train_seed: train_seed(trial.seed),
                    train: &trial.train,
                    val: &trial.val,
                    trace: false,
                    final_features: false,
                },
            )?;
            results.insert((k, trial.index), (f.last.kernel_so[0], f.init_kernel_so[0], f.val_error));
        }
    }
    let mut t = ResultTable::new(
        "kernel_size_sweep",
        &["kernel_size", "trial", "kernel_so", "init_kernel_so", "val_error"],
    );
    for &k in &cfg.kernel_sizes {
        for i in 0..cfg.trials {
            let (so, so0, e) = results[&(k, i)];
            t.push(vec![k.into(), i.into(), so.into(), so0.into(), e.into()]);
        }
    }
    let means = means_by(results.iter().map(|(&(k, _), &(so, _, _))| (k, so)));
    let ordered: Vec<f64> = cfg.kernel_sizes.iter().map(|k| means[k]).collect();
    for (k, m) in cfg.kernel_sizes.iter().zip(&ordered) {
        t.set(format!("mean_kernel_so_k{k}"), *m);
    }
    t.set("last_to_first_ratio", ordered[ordered.len() - 1] / ordered[0]);
    t.set("monotone_violations", ordered.windows(2).filter(|p| p[1] > p[0]).count() as f64);
    let ks: Vec<f64> = cfg.kernel_sizes.iter().map(|&k| k as f64).collect();
    t.set("spearman_k_kernel_so", spearman(&ks, &ordered));
    Ok(t)
}

/// Input orderness at scale `2d` against trained feature-map orderness at
/// depth `d`, across swap levels.
pub fn run_input_feature_correlation(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let grid = cfg.swap_grid()?;
    let layers = cfg.depths_or(&[1, 2, 3]);
    let depth = layers.iter().copied().max().expect("non-empty");
    let scales: Vec<usize> = layers.iter().map(|d| 2 * d).collect();
    let ds = cfg.dataset.load()?;
    let metric_seed = seed::derive(cfg.seed, Stream::Probe, 0);
    let mut results = BTreeMap::new();
    for trial in trial_splits(cfg, &ds)? {
        for &ns in &grid.n_swaps {
            let tr = swapped(&trial.train, grid.block_size, ns, swap_seed(trial.seed))?;
            let va = swapped(&trial.val, grid.block_size, ns, seed::derive(swap_seed(trial.seed), Stream::Split, 1))?;
            let input_so = input_orderness(&tr, &scales, cfg.triples, metric_seed)?;
            let f = fit(
                cfg,
                &FitPlan {
                    spec: model_spec(&cfg.model, depth, &tr)?,
                    init_seed: depth_seed(trial.seed, depth),
                    train_seed: train_seed(trial.seed),
                    train: &tr,
                    val: &va,
                    trace: false,
                    final_features: true,
                },
            )?;
            for (i, &d) in layers.iter().enumerate() {
                results.insert((ns, trial.index, d), (input_so[i], f.last.fm_so[d - 1]));
            }
        }
    }
    let mut t = ResultTable::new(
        "input_feature_correlation",
        &["ns", "trial", "layer", "input_scale", "input_so", "fm_so"],
    );
    for &ns in &grid.n_swaps {
        for i in 0..cfg.trials {
            for &d in &layers {
                let (a, b) = results[&(ns, i, d)];
                t.push(vec![ns.into(), i.into(), d.into(), (2 * d).into(), a.into(), b.into()]);
            }
        }
    }
    for &d in &layers {
        let inp = means_by(results.iter().filter(|(k, _)| k.2 == d).map(|(k, v)| (k.0, v.0)));
        let fm = means_by(results.iter().filter(|(k, _)| k.2 == d).map(|(k, v)| (k.0, v.1)));
        let x: Vec<f64> = grid.n_swaps.iter().map(|ns| inp[ns]).collect();
        let y: Vec<f64> = grid.n_swaps.iter().map(|ns| fm[ns]).collect();
        t.set(format!("pearson_layer{d}_scale{}", 2 * d), pearson(&x, &y));
    }
    Ok(t)
}

/// Error improvement from adding a conv layer against the final-layer
/// feature-map orderness of the shallower network, across swap levels.
pub fn run_depth_improvement_table(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let grid = cfg.swap_grid()?;
    let depths = cfg.depths_or(&[1, 2, 3]);
    let ds = cfg.dataset.load()?;
    let mut results = BTreeMap::new();
    for trial in trial_splits(cfg, &ds)? {
        for &ns in &grid.n_swaps {
            let tr = swapped(&trial.train, grid.block_size, ns, swap_seed(trial.seed))?;
            let va = swapped(&trial.val, grid.block_size, ns, seed::derive(swap_seed(trial.seed), Stream::Split, 1))?;
            for &d in &depths {
                let f = fit(
                    cfg,
                    &FitPlan {
                        spec: model_spec(&cfg.model, d, &tr)?,
                        init_seed: depth_seed(trial.seed, d),
                        train_seed: train_seed(trial.seed),
                        train: &tr,
                        val: &va,
                        trace: false,
                        final_features: true,
                    },
                )?;
                results.insert((ns, d, trial.index), (f.val_error, f.last.fm_so[d - 1]));
            }
        }
    }
    let mut t = ResultTable::new(
        "depth_improvement_table",
        &["transition", "ns", "trial", "error_improvement", "fm_so", "correlation"],
    );
    for pair in depths.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let label = format!("{a}->{b}");
        let mut imp = BTreeMap::new();
        for &ns in &grid.n_swaps {
            for i in 0..cfg.trials {
                // percentage points of validation error removed by the extra layer
                let delta = 100.0 * (results[&(ns, a, i)].0 - results[&(ns, b, i)].0);
                let so = results[&(ns, a, i)].1;
                imp.insert((ns, i), (delta, so));
                t.push(vec![label.as_str().into(), ns.into(), i.into(), delta.into(), so.into(), Cell::Missing]);
            }
        }
        let mi = means_by(imp.iter().map(|(&(ns, _), &(d, _))| (ns, d)));
        let ms = means_by(imp.iter().map(|(&(ns, _), &(_, s))| (ns, s)));
        let x: Vec<f64> = grid.n_swaps.iter().map(|ns| mi[ns]).collect();
        let y: Vec<f64> = grid.n_swaps.iter().map(|ns| ms[ns]).collect();
        let r = pearson(&x, &y);
        for (j, &ns) in grid.n_swaps.iter().enumerate() {
            t.push(vec![label.as_str().into(), ns.into(), Cell::Missing, x[j].into(), y[j].into(), r.into()]);
            t.set(format!("mean_improvement_{a}_to_{b}_ns{ns}"), x[j]);
            t.set(format!("mean_fm_so_depth{a}_ns{ns}"), y[j]);
        }
        t.set(format!("correlation_{a}_to_{b}"), r);
    }
    Ok(t)
}

/// Per-channel final-layer feature-map orderness at selected epochs.
pub fn run_orderness_histogram(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let depth = cfg.depths_or(&[3]).into_iter().max().expect("non-empty");
    let epochs = cfg.train.apply(0).epochs;
    let record: Vec<usize> = if cfg.record_epochs.is_empty() {
        vec![0, epochs]
    } else {
        cfg.record_epochs.clone()
    };
    if let Some(&e) = record.iter().find(|&&e| e > epochs) {
        return Err(ExperimentError::Config(format!("record epoch {e} beyond the {epochs} trained")));
    }
    let ds = cfg.dataset.load()?;
    let mut t = ResultTable::new("orderness_histogram", &["trial", "epoch", "channel", "so", "dead"]);
    let mut per_epoch: BTreeMap<usize, (Vec<f64>, usize)> = BTreeMap::new();
    for trial in trial_splits(cfg, &ds)? {
        let f = fit(
            cfg,
            &FitPlan {
                spec: model_spec(&cfg.model, depth, &trial.train)?,
                init_seed: depth_seed(trial.seed, depth),
                train_seed: train_seed(trial.seed),
                train: &trial.train,
                val: &trial.val,
                trace: true,
                final_features: true,
            },
        )?;
        for &e in &record {
            let r = f
                .log
                .initial
                .iter()
                .chain(&f.log.records)
                .find(|r| r.epoch == e)
                .ok_or(NnError::InvalidConfig(format!("epoch {e} not logged")))?;
            let entry = per_epoch.entry(e).or_default();
            for (c, so) in r.fm_channels[depth - 1].iter().enumerate() {
                t.push(vec![trial.index.into(), e.into(), c.into(), (*so).into(), (so.is_none() as usize).into()]);
                match so {
                    Some(v) => entry.0.push(*v),
                    None => entry.1 += 1,
                }
            }
        }
    }
    for (e, (vals, dead)) in &per_epoch {
        t.set(format!("mean_so_epoch{e}"), mean(vals));
        t.set(format!("dead_channels_epoch{e}"), *dead as f64);
    }
    t.set("channels", cfg.model.width as f64);
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::super::{run, ExperimentKind};
    use super::*;
    use crate::data::{FixtureKind, FixtureSpec};

    fn fixture_config(kind: ExperimentKind) -> ExperimentConfig {
        let mut c = ExperimentConfig::from_json(
            r#"{"experiment": "orderness_vs_swap", "seed": 11,
                "dataset": {"fixture": {"kind": "diffusion", "n": 40, "size": 12, "sigma": 0.1, "seed": 3}}}"#,
        )
        .unwrap();
        c.experiment = kind;
        c.triples = 5000;
        c
    }

    /// Tiny two-class set of labelled fixture images for training runs.
    fn labelled_fixture(c: &mut ExperimentConfig) {
        c.dataset.subset = Some(12);
        c.dataset.val_size = Some(8);
        c.model.width = 3;
        c.model.arch = Some(super::super::Architecture::Mnist);
        c.train.epochs = Some(2);
        c.train.batch_size = Some(4);
        c.train.learning_rate = Some(0.05);
        c.train.probe_size = Some(6);
        c.train.probe_triples = Some(500);
    }

    #[test]
    fn orderness_vs_swap_on_fixture() {
        let mut c = fixture_config(ExperimentKind::OrdernessVsSwap);
        c.swap = Some(super::super::SwapGrid {
            block_size: 3,
            n_swaps: vec![0, 20],
        });
        let t = run(&c).unwrap();
        assert_eq!(t.rows.len(), 2 * max_valid_scale(12, 12));
        let base = t.rows[0][2].as_f64().unwrap();
        assert!((0.8..1.2).contains(&base), "diffusion fixture so {base}");
        assert!(t.stat("rel_drop_scale3").unwrap() > 0.5);
        assert_eq!(t.config_hash, c.hash());
        assert_eq!(run(&c).unwrap(), t);

        // first row matches the plain multiscale profile
        let ds = c.dataset.load().unwrap();
        let p = channel_profiles(ds.images(), &[1], c.triples, seed::derive(c.seed, Stream::Probe, 0)).unwrap();
        assert_eq!(p[0].entries[0].so, base);
    }

    fn two_class_dataset(c: &mut ExperimentConfig) {
        // diffusion images labelled by index parity stand in for a labelled set
        let dir = tempfile::tempdir().unwrap().keep();
        let ds = crate::data::gen_fixture(&FixtureSpec {
            kind: FixtureKind::Diffusion,
            n: 40,
            size: 12,
            sigma: 0.1,
            seed: 1,
        })
        .unwrap();
        let images = ds.images().to_vec();
        let labels = (0..40).map(|i| (i % 2) as u8).collect();
        let ds = Dataset::new(images, labels, 2, crate::data::Provenance::new()).unwrap();
        crate::data::write_snapshot(&dir, &ds).unwrap();
        c.dataset.fixture = None;
        c.dataset.path = Some(dir);
    }

    #[test]
    fn training_experiments_produce_tables() {
        let grid = super::super::SwapGrid {
            block_size: 4,
            n_swaps: vec![0, 5],
        };
        for kind in ExperimentKind::ALL.into_iter().filter(|k| k.trains()) {
            let mut c = fixture_config(kind);
            labelled_fixture(&mut c);
            two_class_dataset(&mut c);
            c.swap = Some(grid.clone());
            c.depths = match kind {
                ExperimentKind::KernelVsSwap | ExperimentKind::KernelSizeSweep => vec![1],
                _ => vec![1, 2],
            };
            c.kernel_sizes = vec![3, 5];
            let t = run(&c).unwrap_or_else(|e| panic!("{kind:?}: {e}"));
            assert!(!t.rows.is_empty(), "{kind:?}");
            assert!(t.rows.iter().all(|r| r.len() == t.columns.len()));
            match kind {
                ExperimentKind::DepthSweep => {
                    assert_eq!(t.rows.len(), 2 * 2);
                    assert!(t.stat("improvement_ns0_depth1_to_2").is_some());
                }
                ExperimentKind::FeaturemapTrace => assert_eq!(t.rows.len(), 3 * 2),
                ExperimentKind::KernelVsSwap => assert!(t.stat("spearman_ns_kernel_so").is_some()),
                ExperimentKind::KernelSizeSweep => assert!(t.stat("last_to_first_ratio").is_some()),
                ExperimentKind::InputFeatureCorrelation => assert_eq!(t.rows.len(), 2 * 2),
                ExperimentKind::DepthImprovementTable => assert_eq!(t.rows.len(), 2 + 2),
                ExperimentKind::OrdernessHistogram => {
                    assert_eq!(t.rows.len(), 2 * 3);
                    assert_eq!(t.stat("channels"), Some(3.0));
                }
                ExperimentKind::OrdernessVsSwap => unreachable!(),
            }
            if kind == ExperimentKind::DepthSweep {
                assert_eq!(run(&c).unwrap().to_csv(), t.to_csv());
            }
        }
    }
}
