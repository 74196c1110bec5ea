//! Layer kernels. Every layer works on a batch of `n` samples stored
//! contiguously; per-sample shapes exclude the batch axis.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{gemm, Scalar};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum LayerKind {
    Dense = 0,
    Conv1D = 1,
    Conv2D = 2,
    MaxPool2D = 3,
    PReLU = 4,
    Flatten = 5,
}

impl LayerKind {
    pub fn from_u8(v: u8) -> Option<Self> {
        Some(match v {
            0 => LayerKind::Dense,
            1 => LayerKind::Conv1D,
            2 => LayerKind::Conv2D,
            3 => LayerKind::MaxPool2D,
            4 => LayerKind::PReLU,
            5 => LayerKind::Flatten,
            _ => return None,
        })
    }
}

/// Trainable tensor with its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub shape: Vec<usize>,
    pub value: Vec<T>,
    pub grad: Vec<T>,
}

impl<T: Scalar> Param<T> {
    fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Param {
            shape,
            value: vec![T::zero(); n],
            grad: vec![T::zero(); n],
        }
    }

    fn filled(shape: Vec<usize>, v: f64) -> Self {
        let mut p = Param::zeros(shape);
        p.value.iter_mut().for_each(|x| *x = T::of(v));
        p
    }

    fn xavier<R: Rng>(shape: Vec<usize>, fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let mut p = Param::zeros(shape);
        for x in &mut p.value {
            *x = T::of(rng.random_range(-limit..=limit));
        }
        p
    }

    fn cast<U: Scalar>(&self) -> Param<U> {
        Param {
            shape: self.shape.clone(),
            value: self.value.iter().map(|&x| U::of(x.f64())).collect(),
            grad: self.grad.iter().map(|&x| U::of(x.f64())).collect(),
        }
    }
}

/// Per-layer state saved by a training forward pass.
#[derive(Debug, Clone)]
pub enum Cache<T> {
    Input(Vec<T>),
    Cols(Vec<T>),
    Argmax(Vec<u32>),
    Empty,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub inputs: usize,
    pub outputs: usize,
    /// `outputs x inputs`
    pub weight: Param<T>,
    pub bias: Param<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn new<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        Dense {
            inputs,
            outputs,
            weight: Param::xavier(vec![outputs, inputs], inputs, outputs, rng),
            bias: Param::zeros(vec![outputs]),
        }
    }

    fn forward(&self, n: usize, x: &[T]) -> (Vec<T>, Cache<T>) {
        let mut y = vec![T::zero(); n * self.outputs];
        for row in y.chunks_mut(self.outputs) {
            row.copy_from_slice(&self.bias.value);
        }
        gemm(false, true, n, self.outputs, self.inputs, x, &self.weight.value, T::one(), &mut y);
        (y, Cache::Input(x.to_vec()))
    }

    fn backward(&mut self, n: usize, x: &[T], dy: &[T]) -> Vec<T> {
        gemm(true, false, self.outputs, self.inputs, n, dy, x, T::one(), &mut self.weight.grad);
        for row in dy.chunks(self.outputs) {
            for (g, &d) in self.bias.grad.iter_mut().zip(row) {
                *g += d;
            }
        }
        let mut dx = vec![T::zero(); n * self.inputs];
        gemm(false, false, n, self.inputs, self.outputs, dy, &self.weight.value, T::zero(), &mut dx);
        dx
    }
}

/// 1-D valid convolution over a channels-last `[length, channels]` sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub length: usize,
    /// `out_channels x kernel x in_channels`
    pub weight: Param<T>,
    pub bias: Param<T>,
}

impl<T: Scalar> Conv1d<T> {
    pub fn new<R: Rng>(
        length: usize,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        rng: &mut R,
    ) -> Self {
        Conv1d {
            in_channels,
            out_channels,
            kernel,
            length,
            weight: Param::xavier(
                vec![out_channels, kernel, in_channels],
                in_channels * kernel,
                out_channels * kernel,
                rng,
            ),
            bias: Param::zeros(vec![out_channels]),
        }
    }

    pub fn out_length(&self) -> usize {
        self.length + 1 - self.kernel
    }

    fn forward(&self, n: usize, x: &[T]) -> (Vec<T>, Cache<T>) {
        let (lo, window) = (self.out_length(), self.kernel * self.in_channels);
        let sample = self.length * self.in_channels;
        let mut cols = Vec::with_capacity(n * lo * window);
        for s in 0..n {
            let xs = &x[s * sample..(s + 1) * sample];
            for l in 0..lo {
                cols.extend_from_slice(&xs[l * self.in_channels..l * self.in_channels + window]);
            }
        }
        let mut y = vec![T::zero(); n * lo * self.out_channels];
        for row in y.chunks_mut(self.out_channels) {
            row.copy_from_slice(&self.bias.value);
        }
        gemm(false, true, n * lo, self.out_channels, window, &cols, &self.weight.value, T::one(), &mut y);
        (y, Cache::Cols(cols))
    }

    fn backward(&mut self, n: usize, cols: &[T], dy: &[T]) -> Vec<T> {
        let (lo, window) = (self.out_length(), self.kernel * self.in_channels);
        let rows = n * lo;
        gemm(true, false, self.out_channels, window, rows, dy, cols, T::one(), &mut self.weight.grad);
        for row in dy.chunks(self.out_channels) {
            for (g, &d) in self.bias.grad.iter_mut().zip(row) {
                *g += d;
            }
        }
        let mut dcols = vec![T::zero(); rows * window];
        gemm(false, false, rows, window, self.out_channels, dy, &self.weight.value, T::zero(), &mut dcols);
        let sample = self.length * self.in_channels;
        let mut dx = vec![T::zero(); n * sample];
        for s in 0..n {
            let dxs = &mut dx[s * sample..(s + 1) * sample];
            for l in 0..lo {
                let src = &dcols[(s * lo + l) * window..(s * lo + l + 1) * window];
                let dst = &mut dxs[l * self.in_channels..l * self.in_channels + window];
                for (d, &v) in dst.iter_mut().zip(src) {
                    *d += v;
                }
            }
        }
        dx
    }
}

/// 2-D stride-1 convolution over a channels-first `[channels, h, w]` sample,
/// with symmetric zero padding.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub pad: usize,
    pub in_h: usize,
    pub in_w: usize,
    /// `out_channels x in_channels x kernel x kernel`
    pub weight: Param<T>,
    pub bias: Param<T>,
}

impl<T: Scalar> Conv2d<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(
        in_channels: usize,
        in_h: usize,
        in_w: usize,
        out_channels: usize,
        kernel: usize,
        pad: usize,
        rng: &mut R,
    ) -> Self {
        let kk = kernel * kernel;
        Conv2d {
            in_channels,
            out_channels,
            kernel,
            pad,
            in_h,
            in_w,
            weight: Param::xavier(
                vec![out_channels, in_channels, kernel, kernel],
                in_channels * kk,
                out_channels * kk,
                rng,
            ),
            bias: Param::zeros(vec![out_channels]),
        }
    }

    pub fn out_hw(&self) -> (usize, usize) {
        (
            self.in_h + 2 * self.pad + 1 - self.kernel,
            self.in_w + 2 * self.pad + 1 - self.kernel,
        )
    }

    fn patch_rows(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    /// Valid output-column range for kernel column offset `j`.
    fn ox_range(&self, j: usize, out_w: usize) -> (usize, usize) {
        let lo = self.pad.saturating_sub(j);
        let hi = (self.in_w + self.pad).saturating_sub(j).min(out_w);
        (lo, hi.max(lo))
    }

    fn im2col(&self, x: &[T], cols: &mut [T]) {
        let (oh, ow) = self.out_hw();
        let k = self.kernel;
        for c in 0..self.in_channels {
            let plane = &x[c * self.in_h * self.in_w..(c + 1) * self.in_h * self.in_w];
            for i in 0..k {
                for j in 0..k {
                    let row = (c * k + i) * k + j;
                    let dst = &mut cols[row * oh * ow..(row + 1) * oh * ow];
                    let (lo, hi) = self.ox_range(j, ow);
                    for oy in 0..oh {
                        let out_row = &mut dst[oy * ow..(oy + 1) * ow];
                        let iy = (oy + i) as isize - self.pad as isize;
                        if iy < 0 || iy >= self.in_h as isize || lo >= hi {
                            out_row.fill(T::zero());
                            continue;
                        }
                        out_row[..lo].fill(T::zero());
                        out_row[hi..].fill(T::zero());
                        let src_start = iy as usize * self.in_w + lo + j - self.pad;
                        out_row[lo..hi].copy_from_slice(&plane[src_start..src_start + (hi - lo)]);
                    }
                }
            }
        }
    }

    fn col2im(&self, cols: &[T], dx: &mut [T]) {
        let (oh, ow) = self.out_hw();
        let k = self.kernel;
        for c in 0..self.in_channels {
            let plane = &mut dx[c * self.in_h * self.in_w..(c + 1) * self.in_h * self.in_w];
            for i in 0..k {
                for j in 0..k {
                    let row = (c * k + i) * k + j;
                    let src = &cols[row * oh * ow..(row + 1) * oh * ow];
                    let (lo, hi) = self.ox_range(j, ow);
                    if lo >= hi {
                        continue;
                    }
                    for oy in 0..oh {
                        let iy = (oy + i) as isize - self.pad as isize;
                        if iy < 0 || iy >= self.in_h as isize {
                            continue;
                        }
                        let dst_start = iy as usize * self.in_w + lo + j - self.pad;
                        let dst = &mut plane[dst_start..dst_start + (hi - lo)];
                        for (d, &v) in dst.iter_mut().zip(&src[oy * ow + lo..oy * ow + hi]) {
                            *d += v;
                        }
                    }
                }
            }
        }
    }

    fn forward(&self, n: usize, x: &[T]) -> (Vec<T>, Cache<T>) {
        let (oh, ow) = self.out_hw();
        let (prow, hw) = (self.patch_rows(), oh * ow);
        let sample = self.in_channels * self.in_h * self.in_w;
        let mut cols = vec![T::zero(); n * prow * hw];
        let mut y = vec![T::zero(); n * self.out_channels * hw];
        for s in 0..n {
            let cs = &mut cols[s * prow * hw..(s + 1) * prow * hw];
            self.im2col(&x[s * sample..(s + 1) * sample], cs);
            let ys = &mut y[s * self.out_channels * hw..(s + 1) * self.out_channels * hw];
            for (o, plane) in ys.chunks_mut(hw).enumerate() {
                plane.fill(self.bias.value[o]);
            }
            gemm(false, false, self.out_channels, hw, prow, &self.weight.value, cs, T::one(), ys);
        }
        (y, Cache::Cols(cols))
    }

    fn backward(&mut self, n: usize, cols: &[T], dy: &[T]) -> Vec<T> {
        let (oh, ow) = self.out_hw();
        let (prow, hw) = (self.patch_rows(), oh * ow);
        let sample = self.in_channels * self.in_h * self.in_w;
        let mut dx = vec![T::zero(); n * sample];
        let mut dcols = vec![T::zero(); prow * hw];
        for s in 0..n {
            let dys = &dy[s * self.out_channels * hw..(s + 1) * self.out_channels * hw];
            let cs = &cols[s * prow * hw..(s + 1) * prow * hw];
            gemm(false, true, self.out_channels, prow, hw, dys, cs, T::one(), &mut self.weight.grad);
            for (o, plane) in dys.chunks(hw).enumerate() {
                let mut acc = 0.0f64;
                for &v in plane {
                    acc += v.f64();
                }
                self.bias.grad[o] += T::of(acc);
            }
            gemm(true, false, prow, hw, self.out_channels, &self.weight.value, dys, T::zero(), &mut dcols);
            self.col2im(&dcols, &mut dx[s * sample..(s + 1) * sample]);
        }
        dx
    }
}

/// 2x2 stride-2 max pooling on `[channels, h, w]`. Odd edges form partial
/// windows (ceil mode). Ties go to the first element in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxPool2d {
    pub channels: usize,
    pub in_h: usize,
    pub in_w: usize,
}

impl MaxPool2d {
    pub fn out_hw(&self) -> (usize, usize) {
        (self.in_h.div_ceil(2), self.in_w.div_ceil(2))
    }

    fn forward<T: Scalar>(&self, n: usize, x: &[T]) -> (Vec<T>, Cache<T>) {
        let (oh, ow) = self.out_hw();
        let (h, w) = (self.in_h, self.in_w);
        let sample = self.channels * h * w;
        let mut y = vec![T::zero(); n * self.channels * oh * ow];
        let mut argmax = vec![0u32; y.len()];
        let mut o = 0;
        for s in 0..n {
            let xs = &x[s * sample..(s + 1) * sample];
            for c in 0..self.channels {
                let base = c * h * w;
                let plane = &xs[base..base + h * w];
                for oy in 0..oh {
                    // a partial window repeats its last row or column, which
                    // never wins a strict comparison
                    let (r0, r1) = (2 * oy * w, (2 * oy + 1).min(h - 1) * w);
                    for ox in 0..ow {
                        let (c0, c1) = (2 * ox, (2 * ox + 1).min(w - 1));
                        let mut best = r0 + c0;
                        for k in [r0 + c1, r1 + c0, r1 + c1] {
                            if plane[k] > plane[best] {
                                best = k;
                            }
                        }
                        y[o] = plane[best];
                        argmax[o] = (base + best) as u32;
                        o += 1;
                    }
                }
            }
        }
        (y, Cache::Argmax(argmax))
    }

    fn backward<T: Scalar>(&self, n: usize, argmax: &[u32], dy: &[T]) -> Vec<T> {
        let sample = self.channels * self.in_h * self.in_w;
        let (oh, ow) = self.out_hw();
        let out_sample = self.channels * oh * ow;
        let mut dx = vec![T::zero(); n * sample];
        for s in 0..n {
            let dxs = &mut dx[s * sample..(s + 1) * sample];
            for i in 0..out_sample {
                dxs[argmax[s * out_sample + i] as usize] += dy[s * out_sample + i];
            }
        }
        dx
    }
}

/// Parametric ReLU with one learned slope per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct PRelu<T> {
    pub channels: usize,
    /// Number of consecutive elements sharing a channel.
    pub inner: usize,
    pub sample: usize,
    pub slope: Param<T>,
}

pub const PRELU_INIT_SLOPE: f64 = 0.25;

impl<T: Scalar> PRelu<T> {
    /// Channel layout follows the input rank: `[c, h, w]` is channels-first,
    /// `[len, c]` channels-last, `[n]` one slope per feature.
    pub fn for_shape(shape: &[usize]) -> Result<Self> {
        let (channels, inner) = match shape {
            [c, h, w] => (*c, h * w),
            [_, c] => (*c, 1),
            [n] => (*n, 1),
            _ => {
                return Err(Error::NonComposable(format!(
                    "PReLU does not support input shape {shape:?}"
                )))
            }
        };
        Ok(PRelu {
            channels,
            inner,
            sample: shape.iter().product(),
            slope: Param::filled(vec![channels], PRELU_INIT_SLOPE),
        })
    }

    fn forward(&self, n: usize, x: &[T]) -> (Vec<T>, Cache<T>) {
        let mut y = x.to_vec();
        for (k, chunk) in y[..n * self.sample].chunks_mut(self.inner).enumerate() {
            let a = self.slope.value[k % self.channels];
            for v in chunk {
                *v = if *v < T::zero() { *v * a } else { *v };
            }
        }
        (y, Cache::Input(x.to_vec()))
    }

    fn backward(&mut self, n: usize, x: &[T], dy: &[T]) -> Vec<T> {
        let mut dx = dy.to_vec();
        let mut dslope = vec![0.0f64; self.channels];
        let len = n * self.sample;
        for (k, (d, xs)) in dx[..len].chunks_mut(self.inner).zip(x[..len].chunks(self.inner)).enumerate() {
            let ch = k % self.channels;
            let a = self.slope.value[ch];
            let mut acc = 0.0f64;
            for (d, &xi) in d.iter_mut().zip(xs) {
                if xi < T::zero() {
                    acc += (*d * xi).f64();
                    *d = *d * a;
                }
            }
            dslope[ch] += acc;
        }
        for (g, d) in self.slope.grad.iter_mut().zip(dslope) {
            *g += T::of(d);
        }
        dx
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    Dense(Dense<T>),
    Conv1D(Conv1d<T>),
    Conv2D(Conv2d<T>),
    MaxPool2D(MaxPool2d),
    PReLU(PRelu<T>),
    Flatten { in_shape: Vec<usize> },
}

impl<T: Scalar> Layer<T> {
    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::Dense(_) => LayerKind::Dense,
            Layer::Conv1D(_) => LayerKind::Conv1D,
            Layer::Conv2D(_) => LayerKind::Conv2D,
            Layer::MaxPool2D(_) => LayerKind::MaxPool2D,
            Layer::PReLU(_) => LayerKind::PReLU,
            Layer::Flatten { .. } => LayerKind::Flatten,
        }
    }

    pub fn out_shape(&self, in_shape: &[usize]) -> Vec<usize> {
        match self {
            Layer::Dense(d) => vec![d.outputs],
            Layer::Conv1D(c) => vec![c.out_length(), c.out_channels],
            Layer::Conv2D(c) => {
                let (h, w) = c.out_hw();
                vec![c.out_channels, h, w]
            }
            Layer::MaxPool2D(p) => {
                let (h, w) = p.out_hw();
                vec![p.channels, h, w]
            }
            Layer::PReLU(_) => in_shape.to_vec(),
            Layer::Flatten { in_shape } => vec![in_shape.iter().product()],
        }
    }

    /// Parameter tensors in serialization order (weights before bias).
    pub fn params(&self) -> Vec<&Param<T>> {
        match self {
            Layer::Dense(d) => vec![&d.weight, &d.bias],
            Layer::Conv1D(c) => vec![&c.weight, &c.bias],
            Layer::Conv2D(c) => vec![&c.weight, &c.bias],
            Layer::PReLU(p) => vec![&p.slope],
            Layer::MaxPool2D(_) | Layer::Flatten { .. } => vec![],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        match self {
            Layer::Dense(d) => vec![&mut d.weight, &mut d.bias],
            Layer::Conv1D(c) => vec![&mut c.weight, &mut c.bias],
            Layer::Conv2D(c) => vec![&mut c.weight, &mut c.bias],
            Layer::PReLU(p) => vec![&mut p.slope],
            Layer::MaxPool2D(_) | Layer::Flatten { .. } => vec![],
        }
    }

    /// Hyper-shape recorded in weight files.
    pub fn dims(&self) -> Vec<usize> {
        match self {
            Layer::Dense(d) => vec![d.outputs, d.inputs],
            Layer::Conv1D(c) => vec![c.out_channels, c.kernel, c.in_channels],
            Layer::Conv2D(c) => vec![c.out_channels, c.in_channels, c.kernel, c.kernel],
            Layer::PReLU(p) => vec![p.channels],
            Layer::MaxPool2D(_) | Layer::Flatten { .. } => vec![],
        }
    }

    pub(crate) fn forward(&self, n: usize, x: &[T]) -> (Vec<T>, Cache<T>) {
        match self {
            Layer::Dense(d) => d.forward(n, x),
            Layer::Conv1D(c) => c.forward(n, x),
            Layer::Conv2D(c) => c.forward(n, x),
            Layer::MaxPool2D(p) => p.forward(n, x),
            Layer::PReLU(p) => p.forward(n, x),
            Layer::Flatten { .. } => (x.to_vec(), Cache::Empty),
        }
    }

    pub(crate) fn backward(&mut self, n: usize, cache: &Cache<T>, dy: &[T]) -> Vec<T> {
        match (self, cache) {
            (Layer::Dense(d), Cache::Input(x)) => d.backward(n, x, dy),
            (Layer::Conv1D(c), Cache::Cols(cols)) => c.backward(n, cols, dy),
            (Layer::Conv2D(c), Cache::Cols(cols)) => c.backward(n, cols, dy),
            (Layer::MaxPool2D(p), Cache::Argmax(a)) => p.backward(n, a, dy),
            (Layer::PReLU(p), Cache::Input(x)) => p.backward(n, x, dy),
            (Layer::Flatten { .. }, Cache::Empty) => dy.to_vec(),
            _ => unreachable!("cache variant always matches the layer that produced it"),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Layer<U> {
        match self {
            Layer::Dense(d) => Layer::Dense(Dense {
                inputs: d.inputs,
                outputs: d.outputs,
                weight: d.weight.cast(),
                bias: d.bias.cast(),
            }),
            Layer::Conv1D(c) => Layer::Conv1D(Conv1d {
                in_channels: c.in_channels,
                out_channels: c.out_channels,
                kernel: c.kernel,
                length: c.length,
                weight: c.weight.cast(),
                bias: c.bias.cast(),
            }),
            Layer::Conv2D(c) => Layer::Conv2D(Conv2d {
                in_channels: c.in_channels,
                out_channels: c.out_channels,
                kernel: c.kernel,
                pad: c.pad,
                in_h: c.in_h,
                in_w: c.in_w,
                weight: c.weight.cast(),
                bias: c.bias.cast(),
            }),
            Layer::MaxPool2D(p) => Layer::MaxPool2D(p.clone()),
            Layer::PReLU(p) => Layer::PReLU(PRelu {
                channels: p.channels,
                inner: p.inner,
                sample: p.sample,
                slope: p.slope.cast(),
            }),
            Layer::Flatten { in_shape } => Layer::Flatten {
                in_shape: in_shape.clone(),
            },
        }
    }
}
