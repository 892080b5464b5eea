use std::path::Path;

use rand_distr::{Distribution, Normal};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::layers::{
    conv_backward, conv_forward_cols, maxpool2x2_backward, maxpool2x2_forward, relu_backward, relu_in_place,
    ConvLayer, DenseLayer, Maps, Padding,
};
use super::{NnError, Real};
use crate::seed::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub out_channels: usize,
    pub kernel_size: usize,
    pub padding: Padding,
    pub pool: bool,
}

/// Layer layout of a network; parameters come from [`ModelSpec::build`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// `(channels, height, width)` of one input example.
    pub input: (usize, usize, usize),
    pub conv: Vec<ConvSpec>,
    /// Widths of hidden dense layers between the flattened features and
    /// the output layer.
    pub hidden: Vec<usize>,
    pub num_classes: usize,
}

impl ModelSpec {
    /// `depth` 3x3 same-padded convs of `width` channels, each followed by
    /// ReLU and 2x2 pooling, then one dense layer to the classes.
    pub fn mnist(depth: usize, width: usize) -> Self {
        Self {
            input: (1, 28, 28),
            conv: (0..depth)
                .map(|_| ConvSpec {
                    out_channels: width,
                    kernel_size: 3,
                    padding: Padding::Same,
                    pool: true,
                })
                .collect(),
            hidden: Vec::new(),
            num_classes: 10,
        }
    }

    /// `depth` 3x3 same-padded convs on 32x32 RGB, pooling after every
    /// other conv (the 1st, 3rd, ...), then a hidden dense layer of
    /// `width` units and the output layer.
    pub fn cifar(depth: usize, width: usize) -> Self {
        Self {
            input: (3, 32, 32),
            conv: (0..depth)
                .map(|i| ConvSpec {
                    out_channels: width,
                    kernel_size: 3,
                    padding: Padding::Same,
                    pool: i % 2 == 0,
                })
                .collect(),
            hidden: vec![width],
            num_classes: 10,
        }
    }

    pub fn with_first_kernel(mut self, kernel_size: usize) -> Self {
        if let Some(c) = self.conv.first_mut() {
            c.kernel_size = kernel_size;
        }
        self
    }

    /// Output shape of every conv block, after pooling.
    pub fn block_shapes(&self) -> Result<Vec<(usize, usize, usize)>, NnError> {
        let mut shape = self.input;
        if shape.0 == 0 || shape.1 == 0 || shape.2 == 0 {
            return Err(NnError::InvalidConfig("empty input shape".into()));
        }
        let mut out = Vec::with_capacity(self.conv.len());
        for (i, c) in self.conv.iter().enumerate() {
            if c.out_channels == 0 || c.kernel_size == 0 {
                return Err(NnError::InvalidConfig(format!("conv {i} has zero channels or kernel size")));
            }
            if c.padding == Padding::Same && c.kernel_size % 2 == 0 {
                return Err(NnError::InvalidConfig(format!(
                    "conv {i}: same padding needs an odd kernel, got {}",
                    c.kernel_size
                )));
            }
            let layer = ConvLayer::<f64>::zeros(shape.0, c.out_channels, c.kernel_size, c.padding, c.pool);
            let (oc, h, w) = layer
                .output_shape(shape)
                .map_err(|e| NnError::ShapeMismatch(format!("conv {i}: {e}")))?;
            shape = if c.pool {
                if h < 2 || w < 2 {
                    return Err(NnError::ShapeMismatch(format!("conv {i}: {h}x{w} map too small to pool")));
                }
                (oc, h / 2, w / 2)
            } else {
                (oc, h, w)
            };
            out.push(shape);
        }
        Ok(out)
    }

    /// He-initialised model: Gaussian weights with std `sqrt(2 / fan_in)`,
    /// zero biases, layer `i` drawn from its own substream of `seed`.
    pub fn build<T: Real>(&self, seed: u64) -> Result<CnnModel<T>, NnError> {
        if self.num_classes < 2 || self.hidden.contains(&0) {
            return Err(NnError::InvalidConfig("need >= 2 classes and non-empty hidden layers".into()));
        }
        let shapes = self.block_shapes()?;
        let fill = |layer: usize, fan_in: usize, w: &mut [T]| {
            let mut rng = seed::sub_rng(seed, Stream::Init, layer as u64);
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            w.iter_mut().for_each(|x| *x = T::of(normal.sample(&mut rng)));
        };
        let mut in_ch = self.input.0;
        let mut conv = Vec::with_capacity(self.conv.len());
        for (i, c) in self.conv.iter().enumerate() {
            let mut l = ConvLayer::zeros(in_ch, c.out_channels, c.kernel_size, c.padding, c.pool);
            fill(i, in_ch * c.kernel_size * c.kernel_size, &mut l.weights);
            conv.push(l);
            in_ch = c.out_channels;
        }
        let (c, h, w) = shapes.last().copied().unwrap_or(self.input);
        let mut width = c * h * w;
        let mut dense = Vec::with_capacity(self.hidden.len() + 1);
        let outs = self.hidden.iter().copied().chain(std::iter::once(self.num_classes));
        for (j, out) in outs.enumerate() {
            let mut l = DenseLayer::zeros(width, out, j < self.hidden.len());
            fill(self.conv.len() + j, width, &mut l.weights);
            dense.push(l);
            width = out;
        }
        Ok(CnnModel {
            spec: self.clone(),
            init_seed: seed,
            conv,
            dense,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: DeserializeOwned"))]
pub struct CnnModel<T> {
    pub spec: ModelSpec,
    pub init_seed: u64,
    pub conv: Vec<ConvLayer<T>>,
    pub dense: Vec<DenseLayer<T>>,
}

struct BlockCache<T> {
    in_shape: (usize, usize, usize),
    cols: Vec<T>,
    /// Post-ReLU, pre-pool output.
    act: Maps<T>,
    argmax: Option<Vec<u32>>,
}

/// Activations kept by [`CnnModel::forward`] for the backward pass.
pub struct Cache<T> {
    blocks: Vec<BlockCache<T>>,
    flat_shape: (usize, usize, usize),
    /// Input of every dense layer; entry `j + 1` is the activated output of
    /// layer `j`.
    dense_inputs: Vec<Vec<T>>,
}

/// Parameter gradients laid out like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub conv_weights: Vec<Vec<T>>,
    pub conv_bias: Vec<Vec<T>>,
    pub dense_weights: Vec<Vec<T>>,
    pub dense_bias: Vec<Vec<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn zeros_like(model: &CnnModel<T>) -> Self {
        let z = |v: &Vec<T>| vec![T::zero(); v.len()];
        Self {
            conv_weights: model.conv.iter().map(|l| z(&l.weights)).collect(),
            conv_bias: model.conv.iter().map(|l| z(&l.bias)).collect(),
            dense_weights: model.dense.iter().map(|l| z(&l.weights)).collect(),
            dense_bias: model.dense.iter().map(|l| z(&l.bias)).collect(),
        }
    }

    fn buffers(&self) -> impl Iterator<Item = &Vec<T>> {
        self.conv_weights
            .iter()
            .chain(&self.conv_bias)
            .chain(&self.dense_weights)
            .chain(&self.dense_bias)
    }

    fn buffers_mut(&mut self) -> impl Iterator<Item = &mut Vec<T>> {
        self.conv_weights
            .iter_mut()
            .chain(&mut self.conv_bias)
            .chain(&mut self.dense_weights)
            .chain(&mut self.dense_bias)
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.buffers_mut().zip(other.buffers()) {
            a.iter_mut().zip(b).for_each(|(x, &y)| *x = *x + y);
        }
    }

    pub fn scale(&mut self, f: T) {
        self.buffers_mut().flatten().for_each(|x| *x = *x * f);
    }

    /// All entries in parameter order (see [`CnnModel::params`]).
    pub fn flat(&self) -> Vec<T> {
        self.buffers().flatten().copied().collect()
    }
}

impl<T: Real> CnnModel<T> {
    pub fn depth(&self) -> usize {
        self.conv.len()
    }

    pub fn num_params(&self) -> usize {
        self.params().map(Vec::len).sum()
    }

    /// Parameter buffers: conv weights, conv biases, dense weights, dense
    /// biases, each in layer order.
    pub fn params(&self) -> impl Iterator<Item = &Vec<T>> {
        let c = self.conv.iter();
        let d = self.dense.iter();
        c.clone()
            .map(|l| &l.weights)
            .chain(c.map(|l| &l.bias))
            .chain(d.clone().map(|l| &l.weights))
            .chain(d.map(|l| &l.bias))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Vec<T>> {
        let (cw, cb): (Vec<_>, Vec<_>) = self.conv.iter_mut().map(|l| (&mut l.weights, &mut l.bias)).unzip();
        let (dw, db): (Vec<_>, Vec<_>) = self.dense.iter_mut().map(|l| (&mut l.weights, &mut l.bias)).unzip();
        cw.into_iter().chain(cb).chain(dw).chain(db)
    }

    fn check_input(&self, x: &Maps<T>) -> Result<(), NnError> {
        if x.shape() != self.spec.input {
            return Err(NnError::ShapeMismatch(format!(
                "model expects {:?} input, got {:?}",
                self.spec.input,
                x.shape()
            )));
        }
        Ok(())
    }

    fn block(&self, i: usize, x: &Maps<T>) -> Result<(Maps<T>, BlockCache<T>), NnError> {
        let layer = &self.conv[i];
        let (mut act, cols) = conv_forward_cols(x, layer)?;
        relu_in_place(&mut act.data);
        let (out, argmax) = if layer.pool {
            let (p, a) = maxpool2x2_forward(&act)?;
            (p, Some(a))
        } else {
            (act.clone(), None)
        };
        Ok((
            out,
            BlockCache {
                in_shape: x.shape(),
                cols,
                act,
                argmax,
            },
        ))
    }

    /// Output of every conv block (post-activation, post-pool) for one example.
    pub fn block_outputs(&self, x: &Maps<T>) -> Result<Vec<Maps<T>>, NnError> {
        self.check_input(x)?;
        let mut outs: Vec<Maps<T>> = Vec::with_capacity(self.conv.len());
        for i in 0..self.conv.len() {
            let (out, _) = self.block(i, outs.last().unwrap_or(x))?;
            outs.push(out);
        }
        Ok(outs)
    }

    /// Raw class scores and the activations needed by [`Self::backward`].
    pub fn forward(&self, x: &Maps<T>) -> Result<(Vec<T>, Cache<T>), NnError> {
        self.check_input(x)?;
        let mut blocks = Vec::with_capacity(self.conv.len());
        let mut h = x.clone();
        for i in 0..self.conv.len() {
            let (out, cache) = self.block(i, &h)?;
            blocks.push(cache);
            h = out;
        }
        let flat_shape = h.shape();
        let mut dense_inputs = Vec::with_capacity(self.dense.len());
        let mut v = h.data;
        for layer in &self.dense {
            let mut out = layer.forward(&v);
            if layer.relu {
                relu_in_place(&mut out);
            }
            dense_inputs.push(std::mem::replace(&mut v, out));
        }
        Ok((
            v,
            Cache {
                blocks,
                flat_shape,
                dense_inputs,
            },
        ))
    }

    pub fn predict(&self, x: &Maps<T>) -> Result<usize, NnError> {
        let (scores, _) = self.forward(x)?;
        Ok(argmax(&scores))
    }

    /// Parameter gradients of a scalar loss whose gradient with respect to
    /// the scores is `dscores`.
    pub fn backward(&self, cache: &Cache<T>, dscores: &[T]) -> Gradients<T> {
        let mut g = Gradients::zeros_like(self);
        let mut delta = dscores.to_vec();
        for (j, layer) in self.dense.iter().enumerate().rev() {
            let input = &cache.dense_inputs[j];
            if layer.relu {
                relu_backward(&mut delta, &cache.dense_inputs[j + 1]);
            }
            T::gemm(layer.outputs, 1, layer.inputs, &delta, false, input, false, T::zero(), &mut g.dense_weights[j]);
            g.dense_bias[j].copy_from_slice(&delta);
            let mut prev = vec![T::zero(); layer.inputs];
            T::gemm(layer.inputs, layer.outputs, 1, &layer.weights, true, &delta, false, T::zero(), &mut prev);
            delta = prev;
        }
        let (c, h, w) = cache.flat_shape;
        let mut d = Maps {
            channels: c,
            height: h,
            width: w,
            data: delta,
        };
        for (i, layer) in self.conv.iter().enumerate().rev() {
            let bc = &cache.blocks[i];
            let mut dz = match &bc.argmax {
                Some(arg) => maxpool2x2_backward(&d, arg, bc.act.shape()),
                None => d,
            };
            relu_backward(&mut dz.data, &bc.act.data);
            let cg = conv_backward(layer, &bc.cols, bc.in_shape, &dz, i > 0);
            g.conv_weights[i] = cg.weights;
            g.conv_bias[i] = cg.bias;
            match cg.input {
                Some(prev) => d = prev,
                None => break,
            }
        }
        g
    }

    /// Plain SGD: `w <- w - lr * g` for every parameter.
    pub fn sgd_step(&mut self, grads: &Gradients<T>, lr: T) {
        for (p, g) in self.params_mut().zip(grads.buffers()) {
            p.iter_mut().zip(g).for_each(|(w, &d)| *w = *w - lr * d);
        }
    }

    pub fn cast<U: Real>(&self) -> CnnModel<U> {
        let cv = |v: &[T]| v.iter().map(|x| U::of(x.f64())).collect::<Vec<U>>();
        CnnModel {
            spec: self.spec.clone(),
            init_seed: self.init_seed,
            conv: self
                .conv
                .iter()
                .map(|l| ConvLayer {
                    in_channels: l.in_channels,
                    out_channels: l.out_channels,
                    kernel_size: l.kernel_size,
                    padding: l.padding,
                    pool: l.pool,
                    weights: cv(&l.weights),
                    bias: cv(&l.bias),
                })
                .collect(),
            dense: self
                .dense
                .iter()
                .map(|l| DenseLayer {
                    inputs: l.inputs,
                    outputs: l.outputs,
                    relu: l.relu,
                    weights: cv(&l.weights),
                    bias: cv(&l.bias),
                })
                .collect(),
        }
    }
}

impl<T: Real + Serialize + DeserializeOwned> CnnModel<T> {
    pub fn save_json(&self, path: &Path) -> Result<(), NnError> {
        let text = serde_json::to_string(self).map_err(|e| NnError::Checkpoint(e.to_string()))?;
        crate::io::atomic_write(path, text.as_bytes()).map_err(|e| NnError::Checkpoint(format!("{}: {e}", path.display())))
    }

    pub fn load_json(path: &Path) -> Result<Self, NnError> {
        let text = std::fs::read_to_string(path).map_err(|e| NnError::Checkpoint(format!("{}: {e}", path.display())))?;
        let model: Self = serde_json::from_str(&text).map_err(|e| NnError::Checkpoint(e.to_string()))?;
        let fresh = model.spec.build::<T>(model.init_seed)?;
        let sizes = |m: &Self| m.params().map(Vec::len).collect::<Vec<_>>();
        if sizes(&fresh) != sizes(&model) {
            return Err(NnError::Checkpoint("parameter sizes do not match the layer specs".into()));
        }
        Ok(model)
    }
}

pub(crate) fn argmax<T: Real>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Softmax cross-entropy with the max score subtracted before
/// exponentiation. Returns the loss and its gradient over the scores.
pub fn loss_softmax_ce<T: Real>(scores: &[T], label: usize) -> (T, Vec<T>) {
    let m = scores.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = scores.iter().map(|&s| (s - m).exp()).collect();
    let z: T = exps.iter().copied().sum();
    let loss = z.ln() - (scores[label] - m);
    let mut grad: Vec<T> = exps.into_iter().map(|e| e / z).collect();
    grad[label] = grad[label] - T::one();
    (loss, grad)
}
