use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::layers::Maps;
use super::model::{argmax, loss_softmax_ce, Gradients};
use super::probe::{feature_stacks, kernel_orderness, probe_indices};
use super::{CnnModel, NnError, Real};
use crate::data::Dataset;
use crate::io::fmt_sig9;
use crate::metric::{orderness_of_stack, MetricError, DEFAULT_TRIPLES};
use crate::seed::{self, Stream};

fn default_probe_size() -> usize {
    1000
}
fn default_probe_triples() -> usize {
    DEFAULT_TRIPLES
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Training examples whose feature maps are measured each epoch.
    #[serde(default = "default_probe_size")]
    pub probe_size: usize,
    /// Triples sampled per channel for feature-map orderness.
    #[serde(default = "default_probe_triples")]
    pub probe_triples: usize,
    /// Record feature-map and kernel orderness each epoch.
    #[serde(default = "default_true")]
    pub monitor: bool,
    /// Also record the untrained model as epoch 0.
    #[serde(default)]
    pub record_initial: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            epochs: 50,
            batch_size: 32,
            seed: 0,
            probe_size: default_probe_size(),
            probe_triples: default_probe_triples(),
            monitor: true,
            record_initial: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) || self.epochs == 0 || self.batch_size == 0 {
            return Err(NnError::InvalidConfig(format!(
                "learning rate, epochs and batch size must be positive (got {}, {}, {})",
                self.learning_rate, self.epochs, self.batch_size
            )));
        }
        if self.monitor && (self.probe_size == 0 || self.probe_triples == 0) {
            return Err(NnError::InvalidConfig("monitoring needs a positive probe size and triple count".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training loss over the epoch (the initial record uses the
    /// untrained model's loss on the training set).
    pub loss: f64,
    /// `NaN` without a validation set.
    pub val_acc: f64,
    /// Mean feature-map orderness per conv layer (`NaN` when unmonitored
    /// or every channel is dead).
    pub fm_so: Vec<f64>,
    /// Per-channel feature-map orderness, `None` for dead channels.
    pub fm_channels: Vec<Vec<Option<f64>>>,
    /// Mean kernel orderness per conv layer (`NaN` when undefined).
    pub kernel_so: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub layers: usize,
    pub initial: Option<EpochRecord>,
    pub records: Vec<EpochRecord>,
}

impl TrainingLog {
    pub fn csv_header(layers: usize) -> String {
        let mut cols = vec!["epoch".to_string(), "loss".into(), "val_acc".into()];
        cols.extend((1..=layers).map(|l| format!("fm_so_layer_{l}")));
        cols.extend((1..=layers).map(|l| format!("kernel_so_layer_{l}")));
        cols.join(",")
    }

    /// One row per completed epoch; undefined values are left empty.
    pub fn to_csv(&self) -> String {
        let num = |x: f64| if x.is_finite() { fmt_sig9(x) } else { String::new() };
        let mut out = Self::csv_header(self.layers) + "\n";
        for r in &self.records {
            let mut row = vec![r.epoch.to_string(), num(r.loss), num(r.val_acc)];
            row.extend(r.fm_so.iter().map(|&v| num(v)));
            row.extend(r.kernel_so.iter().map(|&v| num(v)));
            out += &row.join(",");
            out.push('\n');
        }
        out
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }
}

fn inputs<T: Real>(ds: &Dataset) -> Vec<Maps<T>> {
    ds.images().iter().map(Maps::from_image).collect()
}

/// Fraction of `ds` classified correctly.
pub fn evaluate<T: Real>(model: &CnnModel<T>, ds: &Dataset) -> Result<f64, NnError> {
    if ds.is_empty() {
        return Ok(f64::NAN);
    }
    let correct = ds
        .images()
        .par_iter()
        .zip(ds.labels())
        .map(|(img, &l)| model.predict(&Maps::from_image(img)).map(|p| (p == l as usize) as usize))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(correct.iter().sum::<usize>() as f64 / ds.len() as f64)
}

fn mean_loss<T: Real>(model: &CnnModel<T>, xs: &[Maps<T>], labels: &[u8]) -> Result<f64, NnError> {
    let losses = xs
        .par_iter()
        .zip(labels)
        .map(|(x, &l)| model.forward(x).map(|(s, _)| loss_softmax_ce(&s, l as usize).0.f64()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Loss and gradient summed over `batch`, accumulated in index order so the
/// result does not depend on the thread count.
pub fn batch_gradient<T: Real>(
    model: &CnnModel<T>,
    xs: &[Maps<T>],
    labels: &[u8],
    batch: &[usize],
) -> Result<(f64, Gradients<T>), NnError> {
    let parts = batch
        .par_iter()
        .map(|&i| {
            let (scores, cache) = model.forward(&xs[i])?;
            let (loss, d) = loss_softmax_ce(&scores, labels[i] as usize);
            Ok((loss.f64(), model.backward(&cache, &d)))
        })
        .collect::<Result<Vec<_>, NnError>>()?;
    let mut total = Gradients::zeros_like(model);
    let mut loss = 0.0;
    for (l, g) in &parts {
        loss += l;
        total.add_assign(g);
    }
    Ok((loss, total))
}

fn snapshot<T: Real>(
    model: &CnnModel<T>,
    train: &Dataset,
    val: Option<&Dataset>,
    cfg: &TrainConfig,
    probe: &[usize],
    epoch: usize,
    loss: f64,
) -> Result<EpochRecord, NnError> {
    let layers = model.depth();
    let val_acc = match val {
        Some(v) => evaluate(model, v)?,
        None => f64::NAN,
    };
    let mut fm_so = vec![f64::NAN; layers];
    let mut fm_channels = vec![Vec::new(); layers];
    let mut kernel_so = vec![f64::NAN; layers];
    if cfg.monitor {
        for (l, stack) in feature_stacks(model, train, probe)?.iter().enumerate() {
            // the same substream every epoch, so epochs differ only by the model
            let s = seed::derive(cfg.seed, Stream::Probe, l as u64 + 1);
            match orderness_of_stack(stack, cfg.probe_triples, s) {
                Ok(so) => {
                    fm_so[l] = so.mean_so;
                    fm_channels[l] = so.per_channel;
                }
                Err(MetricError::AllChannelsDegenerate) => fm_channels[l] = vec![None; stack[0].channels()],
                // maps pooled down below 3x3 have no two-hop triple
                Err(MetricError::GridTooSmall { .. }) => {}
                Err(e) => return Err(e.into()),
            }
        }
        for (l, k) in kernel_so.iter_mut().enumerate() {
            match kernel_orderness(model, l) {
                Ok(v) => *k = v,
                Err(NnError::KernelTooSmall { .. } | NnError::AllSlicesDegenerate { .. }) => {}
                Err(e) => return Err(e),
            }
        }
    }
    Ok(EpochRecord {
        epoch,
        loss,
        val_acc,
        fm_so,
        fm_channels,
        kernel_so,
    })
}

/// Validation accuracy and, when `cfg.monitor` is set, feature-map and
/// kernel orderness of `model`, measured exactly as [`train`] does at the
/// end of an epoch.
pub fn epoch_record<T: Real>(
    model: &CnnModel<T>,
    train: &Dataset,
    val: Option<&Dataset>,
    cfg: &TrainConfig,
    epoch: usize,
    loss: f64,
) -> Result<EpochRecord, NnError> {
    let probe = if cfg.monitor {
        probe_indices(train.len(), cfg.probe_size, cfg.seed)
    } else {
        Vec::new()
    };
    snapshot(model, train, val, cfg, &probe, epoch, loss)
}

/// Mini-batch SGD with a seeded shuffle each epoch. Each step applies the
/// batch-mean gradient. Stops with [`NnError::DivergedLoss`], carrying the
/// log so far, as soon as a batch loss is not finite.
pub fn train<T: Real>(
    model: &mut CnnModel<T>,
    train: &Dataset,
    val: Option<&Dataset>,
    cfg: &TrainConfig,
) -> Result<TrainingLog, NnError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(NnError::InvalidConfig("empty training set".into()));
    }
    if let Some(bad) = train.labels().iter().find(|&&l| l as usize >= model.spec.num_classes) {
        return Err(NnError::InvalidConfig(format!(
            "label {bad} outside the model's {} classes",
            model.spec.num_classes
        )));
    }
    let xs = inputs::<T>(train);
    let labels = train.labels();
    let probe = if cfg.monitor {
        probe_indices(train.len(), cfg.probe_size, cfg.seed)
    } else {
        Vec::new()
    };
    let mut log = TrainingLog {
        layers: model.depth(),
        initial: None,
        records: Vec::with_capacity(cfg.epochs),
    };
    if cfg.record_initial {
        let loss = mean_loss(model, &xs, labels)?;
        log.initial = Some(snapshot(model, train, val, cfg, &probe, 0, loss)?);
    }
    let lr = T::of(cfg.learning_rate);
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut seed::sub_rng(cfg.seed, Stream::Order, epoch as u64));
        let mut epoch_loss = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let (loss, mut g) = batch_gradient(model, &xs, labels, batch)?;
            if !loss.is_finite() {
                return Err(NnError::DivergedLoss {
                    epoch,
                    batch: b,
                    log: Box::new(log),
                });
            }
            epoch_loss += loss;
            g.scale(T::one() / T::of(batch.len() as f64));
            model.sgd_step(&g, lr);
        }
        let mean = epoch_loss / train.len() as f64;
        log.records.push(snapshot(model, train, val, cfg, &probe, epoch, mean)?);
    }
    Ok(log)
}

/// Class with the highest score for every example of `ds`.
pub fn predictions<T: Real>(model: &CnnModel<T>, ds: &Dataset) -> Result<Vec<usize>, NnError> {
    ds.images()
        .par_iter()
        .map(|img| model.forward(&Maps::from_image(img)).map(|(s, _)| argmax(&s)))
        .collect()
}
