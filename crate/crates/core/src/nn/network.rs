use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{Cache, Conv1d, Conv2d, Dense, Layer, MaxPool2d, PRelu, Param};
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Sequential stack of layers with fixed per-sample input and output shapes.
#[derive(Debug, Clone)]
pub struct Network<T = f32> {
    layers: Vec<Layer<T>>,
    /// `shapes[i]` is the input shape of layer `i`; the last entry is the output.
    shapes: Vec<Vec<usize>>,
    caches: Vec<Option<Cache<T>>>,
    cached_batch: Option<(usize, bool)>,
}

impl<T: Scalar> PartialEq for Network<T> {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers && self.shapes == other.shapes
    }
}

impl<T: Scalar> Network<T> {
    pub fn input_shape(&self) -> &[usize] {
        &self.shapes[0]
    }

    pub fn output_shape(&self) -> &[usize] {
        self.shapes.last().expect("at least the input shape")
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn layer_input_shape(&self, index: usize) -> &[usize] {
        &self.shapes[index]
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }

    /// All parameter tensors, layer by layer.
    pub fn params(&self) -> Vec<&Param<T>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.grad.fill(T::zero());
        }
    }

    /// Batch size of `shape`: either exactly the input shape (one sample) or
    /// the input shape behind a leading batch axis.
    fn batch_of(&self, shape: &[usize]) -> Result<(usize, bool)> {
        let input = self.input_shape();
        if shape == input {
            Ok((1, false))
        } else if shape.len() == input.len() + 1 && &shape[1..] == input {
            Ok((shape[0], true))
        } else {
            let mut expected = vec![0];
            expected.extend_from_slice(input);
            Err(Error::ShapeMismatch {
                expected,
                got: shape.to_vec(),
            })
        }
    }

    fn output_tensor(&self, n: usize, batched: bool, data: Vec<T>) -> Tensor<T> {
        let mut shape = if batched { vec![n] } else { vec![] };
        shape.extend_from_slice(self.output_shape());
        Tensor::new(shape, data).expect("layer output matches inferred shape")
    }

    fn run(&self, input: &Tensor<T>, mut keep: Option<&mut Vec<Option<Cache<T>>>>) -> Result<(Vec<T>, usize, bool)> {
        let (n, batched) = self.batch_of(input.shape())?;
        let mut x = input.data().to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let (y, cache) = layer.forward(n, &x);
            if let Some(caches) = keep.as_deref_mut() {
                caches[i] = Some(cache);
            }
            x = y;
        }
        Ok((x, n, batched))
    }

    /// Forward pass that caches activations for [`Network::backward`].
    pub fn forward(&mut self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let mut caches = vec![None; self.layers.len()];
        let (y, n, batched) = self.run(input, Some(&mut caches))?;
        self.caches = caches;
        self.cached_batch = Some((n, batched));
        Ok(self.output_tensor(n, batched, y))
    }

    /// Forward pass on frozen weights; safe to share between readers.
    pub fn infer(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let (y, n, batched) = self.run(input, None)?;
        Ok(self.output_tensor(n, batched, y))
    }

    /// Accumulates parameter gradients for the cached forward pass and returns
    /// the gradient with respect to the input.
    pub fn backward(&mut self, loss_grad: &Tensor<T>) -> Result<Tensor<T>> {
        let (n, batched) = self.cached_batch.ok_or(Error::NoForwardCache(self.layers.len()))?;
        let mut expected = if batched { vec![n] } else { vec![] };
        expected.extend_from_slice(self.output_shape());
        if loss_grad.shape() != expected.as_slice() {
            return Err(Error::ShapeMismatch {
                expected,
                got: loss_grad.shape().to_vec(),
            });
        }
        let mut dy = loss_grad.data().to_vec();
        for i in (0..self.layers.len()).rev() {
            let cache = self.caches[i].take().ok_or(Error::NoForwardCache(i))?;
            dy = self.layers[i].backward(n, &cache, &dy);
        }
        self.cached_batch = None;
        let mut shape = if batched { vec![n] } else { vec![] };
        shape.extend_from_slice(self.input_shape());
        Tensor::new(shape, dy)
    }

    /// Sign pattern of every PReLU input and every pooling argmax; two inputs
    /// with equal patterns lie on the same linear piece of the network.
    pub fn activation_pattern(&self, input: &Tensor<T>) -> Result<Vec<u32>> {
        let mut caches = vec![None; self.layers.len()];
        self.run(input, Some(&mut caches))?;
        let mut pattern = Vec::new();
        for (layer, cache) in self.layers.iter().zip(caches) {
            match (layer, cache) {
                (Layer::PReLU(_), Some(Cache::Input(x))) => {
                    pattern.extend(x.iter().map(|v| u32::from(*v < T::zero())));
                }
                (Layer::MaxPool2D(_), Some(Cache::Argmax(a))) => pattern.extend(a),
                _ => {}
            }
        }
        Ok(pattern)
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            layers: self.layers.iter().map(|l| l.cast()).collect(),
            shapes: self.shapes.clone(),
            caches: vec![None; self.layers.len()],
            cached_batch: None,
        }
    }
}

/// Builds a [`Network`] layer by layer with shape inference.
pub struct NetworkBuilder {
    shapes: Vec<Vec<usize>>,
    layers: Vec<Layer<f64>>,
    rng: ChaCha8Rng,
}

impl NetworkBuilder {
    pub fn new(input_shape: Vec<usize>, seed: u64) -> Self {
        NetworkBuilder {
            shapes: vec![input_shape],
            layers: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn current(&self) -> &[usize] {
        self.shapes.last().expect("input shape")
    }

    fn push(mut self, layer: Layer<f64>) -> Self {
        let out = layer.out_shape(self.current());
        self.layers.push(layer);
        self.shapes.push(out);
        self
    }

    pub fn dense(mut self, outputs: usize) -> Result<Self> {
        let inputs = match self.current() {
            [n] => *n,
            other => {
                return Err(Error::NonComposable(format!(
                    "Dense needs a flat input, got {other:?}"
                )))
            }
        };
        if outputs == 0 {
            return Err(Error::NonComposable("Dense with zero outputs".into()));
        }
        let layer = Dense::new(inputs, outputs, &mut self.rng);
        Ok(self.push(Layer::Dense(layer)))
    }

    /// Valid 1-D convolution over a `[length, channels]` input.
    pub fn conv1d(mut self, out_channels: usize, kernel: usize) -> Result<Self> {
        let (length, in_channels) = match self.current() {
            [l, c] => (*l, *c),
            other => {
                return Err(Error::NonComposable(format!(
                    "Conv1D needs [length, channels], got {other:?}"
                )))
            }
        };
        if kernel == 0 || kernel > length {
            return Err(Error::NonComposable(format!(
                "Conv1D kernel {kernel} does not fit length {length}"
            )));
        }
        let layer = Conv1d::new(length, in_channels, out_channels, kernel, &mut self.rng);
        Ok(self.push(Layer::Conv1D(layer)))
    }

    pub fn conv2d(mut self, out_channels: usize, kernel: usize, pad: usize) -> Result<Self> {
        let (c, h, w) = match self.current() {
            [c, h, w] => (*c, *h, *w),
            other => {
                return Err(Error::NonComposable(format!(
                    "Conv2D needs [channels, h, w], got {other:?}"
                )))
            }
        };
        if kernel == 0 || h + 2 * pad < kernel || w + 2 * pad < kernel {
            return Err(Error::NonComposable(format!(
                "Conv2D kernel {kernel} (pad {pad}) does not fit {h}x{w}"
            )));
        }
        let layer = Conv2d::new(c, h, w, out_channels, kernel, pad, &mut self.rng);
        Ok(self.push(Layer::Conv2D(layer)))
    }

    pub fn maxpool2d(self) -> Result<Self> {
        let (channels, in_h, in_w) = match self.current() {
            [c, h, w] if *h > 0 && *w > 0 => (*c, *h, *w),
            other => {
                return Err(Error::NonComposable(format!(
                    "MaxPool2D needs a non-empty [channels, h, w], got {other:?}"
                )))
            }
        };
        Ok(self.push(Layer::MaxPool2D(MaxPool2d {
            channels,
            in_h,
            in_w,
        })))
    }

    pub fn prelu(self) -> Result<Self> {
        let layer = PRelu::for_shape(self.current())?;
        Ok(self.push(Layer::PReLU(layer)))
    }

    pub fn flatten(self) -> Result<Self> {
        let in_shape = self.current().to_vec();
        Ok(self.push(Layer::Flatten { in_shape }))
    }

    /// Weights are drawn in `f64` so every precision sees the same values.
    pub fn build<T: Scalar>(self) -> Network<T> {
        let n = self.layers.len();
        Network {
            layers: self.layers.iter().map(|l| l.cast()).collect(),
            shapes: self.shapes,
            caches: vec![None; n],
            cached_batch: None,
        }
    }
}
