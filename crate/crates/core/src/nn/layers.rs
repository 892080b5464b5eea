use serde::{Deserialize, Serialize};

use super::{NnError, Real};

/// Channel-planar activations of one example.
#[derive(Debug, Clone, PartialEq)]
pub struct Maps<T> {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<T>,
}

impl<T: Real> Maps<T> {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<T>) -> Result<Self, NnError> {
        if data.len() != channels * height * width {
            return Err(NnError::ShapeMismatch(format!(
                "{} values for a {channels}x{height}x{width} map",
                data.len()
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![T::zero(); channels * height * width],
        }
    }

    pub fn from_image(img: &crate::Image) -> Self {
        let (c, h, w) = img.shape();
        Self {
            channels: c,
            height: h,
            width: w,
            data: img.data().iter().map(|&v| T::of(v)).collect(),
        }
    }

    pub fn to_image(&self) -> crate::Image {
        let data = self.data.iter().map(|v| v.f64()).collect();
        crate::Image::new(self.channels, self.height, self.width, data).expect("finite activations")
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    Valid,
    Same,
}

impl Padding {
    fn amount(self, k: usize) -> usize {
        match self {
            Padding::Valid => 0,
            Padding::Same => (k - 1) / 2,
        }
    }
}

/// Output side of a conv along one axis, `None` if the kernel does not fit.
pub fn conv_out(size: usize, k: usize, padding: Padding) -> Option<usize> {
    (size + 2 * padding.amount(k)).checked_sub(k).map(|s| s + 1).filter(|&s| s > 0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvLayer<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub padding: Padding,
    pub pool: bool,
    /// `[out][in][K][K]`, row-major.
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> ConvLayer<T> {
    pub fn zeros(in_channels: usize, out_channels: usize, kernel_size: usize, padding: Padding, pool: bool) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel_size,
            padding,
            pool,
            weights: vec![T::zero(); out_channels * in_channels * kernel_size * kernel_size],
            bias: vec![T::zero(); out_channels],
        }
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel_size * self.kernel_size
    }

    pub fn output_shape(&self, input: (usize, usize, usize)) -> Result<(usize, usize, usize), NnError> {
        let (c, h, w) = input;
        if c != self.in_channels {
            return Err(NnError::ShapeMismatch(format!(
                "conv expects {} input channels, got {c}",
                self.in_channels
            )));
        }
        match (
            conv_out(h, self.kernel_size, self.padding),
            conv_out(w, self.kernel_size, self.padding),
        ) {
            (Some(oh), Some(ow)) => Ok((self.out_channels, oh, ow)),
            _ => Err(NnError::ShapeMismatch(format!(
                "{h}x{w} input too small for a {0}x{0} {1:?} conv",
                self.kernel_size, self.padding
            ))),
        }
    }
}

/// Patch matrix `[in * K * K][oh * ow]` of `input`, zero outside the image.
pub(crate) fn im2col<T: Real>(input: &Maps<T>, k: usize, padding: Padding, oh: usize, ow: usize) -> Vec<T> {
    let pad = padding.amount(k) as isize;
    let (h, w) = (input.height as isize, input.width as isize);
    let n = oh * ow;
    let mut cols = vec![T::zero(); input.channels * k * k * n];
    for c in 0..input.channels {
        let plane = &input.data[c * input.height * input.width..(c + 1) * input.height * input.width];
        for ki in 0..k {
            for kj in 0..k {
                let row = &mut cols[((c * k + ki) * k + kj) * n..][..n];
                for oi in 0..oh {
                    let ii = oi as isize + ki as isize - pad;
                    if ii < 0 || ii >= h {
                        continue;
                    }
                    let src = &plane[ii as usize * input.width..][..input.width];
                    let dst = &mut row[oi * ow..][..ow];
                    let shift = kj as isize - pad;
                    let lo = (-shift).clamp(0, ow as isize) as usize;
                    let hi = (w - shift).clamp(0, ow as isize) as usize;
                    for oj in lo..hi {
                        dst[oj] = src[(oj as isize + shift) as usize];
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto the input.
pub(crate) fn col2im<T: Real>(cols: &[T], shape: (usize, usize, usize), k: usize, padding: Padding, oh: usize, ow: usize) -> Maps<T> {
    let (channels, height, width) = shape;
    let pad = padding.amount(k) as isize;
    let n = oh * ow;
    let mut out = Maps::zeros(channels, height, width);
    for c in 0..channels {
        let plane = &mut out.data[c * height * width..(c + 1) * height * width];
        for ki in 0..k {
            for kj in 0..k {
                let row = &cols[((c * k + ki) * k + kj) * n..][..n];
                for oi in 0..oh {
                    let ii = oi as isize + ki as isize - pad;
                    if ii < 0 || ii >= height as isize {
                        continue;
                    }
                    let dst = &mut plane[ii as usize * width..][..width];
                    let src = &row[oi * ow..][..ow];
                    let shift = kj as isize - pad;
                    let lo = (-shift).clamp(0, ow as isize) as usize;
                    let hi = (width as isize - shift).clamp(0, ow as isize) as usize;
                    for oj in lo..hi {
                        dst[(oj as isize + shift) as usize] = dst[(oj as isize + shift) as usize] + src[oj];
                    }
                }
            }
        }
    }
    out
}

/// Cross-correlation plus bias, no activation. Returns the output and the
/// patch matrix used to compute it.
pub(crate) fn conv_forward_cols<T: Real>(input: &Maps<T>, layer: &ConvLayer<T>) -> Result<(Maps<T>, Vec<T>), NnError> {
    let (oc, oh, ow) = layer.output_shape(input.shape())?;
    let cols = im2col(input, layer.kernel_size, layer.padding, oh, ow);
    let n = oh * ow;
    let mut out = Vec::with_capacity(oc * n);
    for &b in &layer.bias {
        out.extend(std::iter::repeat_n(b, n));
    }
    T::gemm(oc, layer.patch_len(), n, &layer.weights, false, &cols, false, T::one(), &mut out);
    Ok((Maps::new(oc, oh, ow, out)?, cols))
}

pub fn conv2d_forward<T: Real>(input: &Maps<T>, layer: &ConvLayer<T>) -> Result<Maps<T>, NnError> {
    conv_forward_cols(input, layer).map(|(out, _)| out)
}

/// Gradients of one conv application given the output delta.
pub(crate) struct ConvGrads<T> {
    pub weights: Vec<T>,
    pub bias: Vec<T>,
    pub input: Option<Maps<T>>,
}

pub(crate) fn conv_backward<T: Real>(
    layer: &ConvLayer<T>,
    cols: &[T],
    in_shape: (usize, usize, usize),
    delta: &Maps<T>,
    need_input: bool,
) -> ConvGrads<T> {
    let (oc, oh, ow) = delta.shape();
    let n = oh * ow;
    let p = layer.patch_len();
    // dW = delta * cols^T: each weight accumulates patch value x output delta
    let mut weights = vec![T::zero(); oc * p];
    T::gemm(oc, n, p, &delta.data, false, cols, true, T::zero(), &mut weights);
    let bias = delta.data.chunks_exact(n).map(|r| r.iter().copied().sum()).collect();
    let input = need_input.then(|| {
        let mut dcols = vec![T::zero(); p * n];
        T::gemm(p, oc, n, &layer.weights, true, &delta.data, false, T::zero(), &mut dcols);
        col2im(&dcols, in_shape, layer.kernel_size, layer.padding, oh, ow)
    });
    ConvGrads { weights, bias, input }
}

/// 2x2 max-pooling with stride 2. An odd trailing row or column is dropped.
/// The argmax holds, per output cell, the flat index into the input plane;
/// ties go to the first cell in row-major order.
pub fn maxpool2x2_forward<T: Real>(input: &Maps<T>) -> Result<(Maps<T>, Vec<u32>), NnError> {
    let (c, h, w) = input.shape();
    let (oh, ow) = (h / 2, w / 2);
    if oh == 0 || ow == 0 {
        return Err(NnError::ShapeMismatch(format!("{h}x{w} map too small to pool")));
    }
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut arg = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let plane = &input.data[ch * h * w..(ch + 1) * h * w];
        for i in 0..oh {
            for j in 0..ow {
                let base = 2 * i * w + 2 * j;
                let mut best = base;
                for idx in [base + 1, base + w, base + w + 1] {
                    if plane[idx] > plane[best] {
                        best = idx;
                    }
                }
                out.push(plane[best]);
                arg.push(best as u32);
            }
        }
    }
    Ok((Maps::new(c, oh, ow, out)?, arg))
}

pub(crate) fn maxpool2x2_backward<T: Real>(delta: &Maps<T>, argmax: &[u32], in_shape: (usize, usize, usize)) -> Maps<T> {
    let (c, h, w) = in_shape;
    let mut out = Maps::zeros(c, h, w);
    let m = delta.height * delta.width;
    for ch in 0..c {
        for i in 0..m {
            out.data[ch * h * w + argmax[ch * m + i] as usize] = delta.data[ch * m + i];
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub relu: bool,
    /// `[out][in]`, row-major.
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> DenseLayer<T> {
    pub fn zeros(inputs: usize, outputs: usize, relu: bool) -> Self {
        Self {
            inputs,
            outputs,
            relu,
            weights: vec![T::zero(); inputs * outputs],
            bias: vec![T::zero(); outputs],
        }
    }

    /// Affine part only.
    pub fn forward(&self, x: &[T]) -> Vec<T> {
        let mut out = self.bias.clone();
        T::gemm(self.outputs, self.inputs, 1, &self.weights, false, x, false, T::one(), &mut out);
        out
    }
}

pub(crate) fn relu_in_place<T: Real>(v: &mut [T]) {
    for x in v {
        if *x < T::zero() {
            *x = T::zero();
        }
    }
}

/// Zeroes `delta` where the activation was clipped.
pub(crate) fn relu_backward<T: Real>(delta: &mut [T], activated: &[T]) {
    for (d, &a) in delta.iter_mut().zip(activated) {
        if a <= T::zero() {
            *d = T::zero();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng;

    fn layer(in_ch: usize, out_ch: usize, k: usize, padding: Padding, seed: u64) -> ConvLayer<f64> {
        let mut rng = seed::rng(seed);
        let mut l = ConvLayer::zeros(in_ch, out_ch, k, padding, false);
        l.weights.iter_mut().for_each(|w| *w = rng.random_range(-1.0..1.0));
        l.bias.iter_mut().for_each(|b| *b = rng.random_range(-1.0..1.0));
        l
    }

    fn random_maps(c: usize, h: usize, w: usize, seed: u64) -> Maps<f64> {
        let mut rng = seed::rng(seed);
        Maps::new(c, h, w, (0..c * h * w).map(|_| rng.random()).collect()).unwrap()
    }

    /// Direct nested-loop cross-correlation.
    fn oracle(x: &Maps<f64>, l: &ConvLayer<f64>) -> Maps<f64> {
        let k = l.kernel_size;
        let pad = if l.padding == Padding::Same { (k - 1) / 2 } else { 0 } as isize;
        let (oc, oh, ow) = l.output_shape(x.shape()).unwrap();
        let mut out = Maps::zeros(oc, oh, ow);
        for o in 0..oc {
            for i in 0..oh {
                for j in 0..ow {
                    let mut s = l.bias[o];
                    for c in 0..x.channels {
                        for a in 0..k {
                            for b in 0..k {
                                let (ii, jj) = (i as isize + a as isize - pad, j as isize + b as isize - pad);
                                if ii >= 0 && jj >= 0 && (ii as usize) < x.height && (jj as usize) < x.width {
                                    s += l.weights[((o * x.channels + c) * k + a) * k + b]
                                        * x.data[(c * x.height + ii as usize) * x.width + jj as usize];
                                }
                            }
                        }
                    }
                    out.data[(o * oh + i) * ow + j] = s;
                }
            }
        }
        out
    }

    #[test]
    fn one_by_one_is_affine() {
        let mut l = ConvLayer::zeros(1, 1, 1, Padding::Valid, false);
        l.weights[0] = 3.0;
        l.bias[0] = -0.5;
        let out = conv2d_forward(&Maps::new(1, 1, 1, vec![2.0]).unwrap(), &l).unwrap();
        assert_eq!(out.data, vec![5.5]);
    }

    #[test]
    fn delta_kernel_same_is_identity() {
        let mut l = ConvLayer::zeros(1, 1, 3, Padding::Same, false);
        l.weights[4] = 1.0;
        let x = random_maps(1, 5, 4, 1);
        assert_eq!(conv2d_forward(&x, &l).unwrap(), x);
    }

    #[test]
    fn matches_direct_oracle() {
        for (padding, k, c) in [(Padding::Valid, 3, 1), (Padding::Same, 3, 2), (Padding::Same, 5, 3), (Padding::Valid, 2, 2)] {
            let x = random_maps(c, 5, 5, 7);
            let l = layer(c, 4, k, padding, 11);
            let got = conv2d_forward(&x, &l).unwrap();
            let want = oracle(&x, &l);
            assert_eq!(got.shape(), want.shape());
            for (a, b) in got.data.iter().zip(&want.data) {
                assert!((a - b).abs() < 1e-12, "{padding:?} k={k}");
            }
        }
        assert_eq!(layer(1, 1, 3, Padding::Valid, 0).output_shape((1, 8, 8)).unwrap(), (1, 6, 6));
        assert!(layer(1, 1, 5, Padding::Valid, 0).output_shape((1, 4, 8)).is_err());
        assert!(layer(2, 1, 3, Padding::Valid, 0).output_shape((1, 8, 8)).is_err());
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), y> == <x, col2im(y)>
        let x = random_maps(2, 5, 6, 3);
        for padding in [Padding::Valid, Padding::Same] {
            let (oh, ow) = (conv_out(5, 3, padding).unwrap(), conv_out(6, 3, padding).unwrap());
            let cols = im2col(&x, 3, padding, oh, ow);
            let mut rng = seed::rng(4);
            let y: Vec<f64> = (0..cols.len()).map(|_| rng.random()).collect();
            let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
            let back = col2im(&y, x.shape(), 3, padding, oh, ow);
            let rhs: f64 = x.data.iter().zip(&back.data).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-10);
        }
    }

    #[test]
    fn pooling() {
        let x = Maps::new(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (y, arg) = maxpool2x2_forward(&x).unwrap();
        assert_eq!(y.data, vec![4.0]);
        assert_eq!(arg, vec![3]);

        let flat = Maps::new(1, 3, 5, vec![0.5; 15]).unwrap();
        let (y, arg) = maxpool2x2_forward(&flat).unwrap();
        assert_eq!(y.shape(), (1, 1, 2));
        assert_eq!(y.data, vec![0.5, 0.5]);
        assert_eq!(arg, vec![0, 2]);

        let d = Maps::new(1, 1, 2, vec![7.0, -1.0]).unwrap();
        let back = maxpool2x2_backward(&d, &arg, (1, 3, 5));
        let mut want = vec![0.0; 15];
        want[0] = 7.0;
        want[2] = -1.0;
        assert_eq!(back.data, want);
        assert!(maxpool2x2_forward(&Maps::<f64>::zeros(1, 1, 4)).is_err());
    }
}
