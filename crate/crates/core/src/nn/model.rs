use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::layers::{self, Padding, KERNEL};
use crate::emotion::{EmotionScores, NUM_EMOTIONS};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// One layer of the network. Convolutions use 3×3 kernels with same
/// padding; pooling is 2×2 with stride 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerSpec {
    Conv2D { in_channels: usize, out_channels: usize },
    ReLU,
    MaxPool,
    Flatten,
    Dense { in_units: usize, out_units: usize },
    Softmax,
}

impl LayerSpec {
    pub fn has_parameters(&self) -> bool {
        matches!(self, LayerSpec::Conv2D { .. } | LayerSpec::Dense { .. })
    }

    /// (weight shape, bias length) for parameterised layers.
    pub fn parameter_shape(&self) -> Option<(Vec<usize>, usize)> {
        match *self {
            LayerSpec::Conv2D { in_channels, out_channels } => {
                Some((vec![out_channels, in_channels, KERNEL, KERNEL], out_channels))
            }
            LayerSpec::Dense { in_units, out_units } => Some((vec![out_units, in_units], out_units)),
            _ => None,
        }
    }

    fn fan_in(&self) -> usize {
        match *self {
            LayerSpec::Conv2D { in_channels, .. } => in_channels * KERNEL * KERNEL,
            LayerSpec::Dense { in_units, .. } => in_units,
            _ => 0,
        }
    }

    /// Output shape for `input`, or a shape error if the layer cannot accept it.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match (*self, input) {
            (LayerSpec::Conv2D { in_channels, out_channels }, &[c, h, w]) if c == in_channels => {
                Ok(vec![out_channels, h, w])
            }
            (LayerSpec::ReLU, s) => Ok(s.to_vec()),
            (LayerSpec::MaxPool, &[c, h, w]) if h >= 2 && w >= 2 => Ok(vec![c, h / 2, w / 2]),
            (LayerSpec::Flatten, s) => Ok(vec![s.iter().product()]),
            (LayerSpec::Dense { in_units, out_units }, &[n]) if n == in_units => Ok(vec![out_units]),
            (LayerSpec::Softmax, &[n]) => Ok(vec![n]),
            (layer, s) => Err(Error::Shape(format!("{layer:?} cannot take input of shape {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T = f32> {
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> LayerParams<T> {
    fn zeros(spec: &LayerSpec) -> Option<Self> {
        let (shape, bias) = spec.parameter_shape()?;
        Some(LayerParams {
            weights: Tensor::zeros(&shape).expect("layer dims are positive"),
            bias: Tensor::zeros(&[bias]).expect("layer dims are positive"),
        })
    }

    fn cast<U: Scalar>(&self) -> LayerParams<U> {
        LayerParams {
            weights: self.weights.cast(),
            bias: self.bias.cast(),
        }
    }
}

/// A shape-checked layer stack with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T = f32> {
    input_shape: [usize; 3],
    layers: Vec<LayerSpec>,
    params: Vec<Option<LayerParams<T>>>,
    /// Output shape of every layer, computed at construction.
    shapes: Vec<Vec<usize>>,
}

impl<T: Scalar> Model<T> {
    /// Builds a zero-parameter model after checking that every layer's
    /// output fits the next one and the stack ends in a 7-way softmax.
    pub fn new(input_shape: [usize; 3], layers: Vec<LayerSpec>) -> Result<Self> {
        let params = layers.iter().map(LayerParams::zeros).collect();
        Self::assemble(input_shape, layers, params)
    }

    /// Builds a model from explicit parameters, one entry per parameterised
    /// layer in stack order.
    pub fn from_parameters(input_shape: [usize; 3], layers: Vec<LayerSpec>, params: Vec<LayerParams<T>>) -> Result<Self> {
        let wanted = layers.iter().filter(|l| l.has_parameters()).count();
        if params.len() != wanted {
            return Err(Error::Shape(format!(
                "{wanted} parameterised layers but {} parameter sets",
                params.len()
            )));
        }
        let mut supplied = params.into_iter();
        let mut slots = Vec::with_capacity(layers.len());
        for layer in &layers {
            slots.push(if let Some((w_shape, b_len)) = layer.parameter_shape() {
                let p = supplied.next().expect("counted above");
                if p.weights.shape() != w_shape.as_slice() || p.bias.shape() != [b_len] {
                    return Err(Error::Shape(format!(
                        "{layer:?} expects weights {w_shape:?} and bias [{b_len}], got {:?} and {:?}",
                        p.weights.shape(),
                        p.bias.shape()
                    )));
                }
                Some(p)
            } else {
                None
            });
        }
        Self::assemble(input_shape, layers, slots)
    }

    fn assemble(input_shape: [usize; 3], layers: Vec<LayerSpec>, params: Vec<Option<LayerParams<T>>>) -> Result<Self> {
        if input_shape[0] != 1 || input_shape.contains(&0) {
            return Err(Error::Shape(format!(
                "model input must be a single-channel [1, H, W] image, got {input_shape:?}"
            )));
        }
        let Some(LayerSpec::Softmax) = layers.last() else {
            return Err(Error::Shape("the last layer must be Softmax".into()));
        };
        if layers[..layers.len() - 1].contains(&LayerSpec::Softmax) {
            return Err(Error::Shape("Softmax may only appear as the last layer".into()));
        }
        let mut shapes = Vec::with_capacity(layers.len());
        let mut current = input_shape.to_vec();
        for (i, layer) in layers.iter().enumerate() {
            current = layer
                .output_shape(&current)
                .map_err(|e| Error::Shape(format!("layer {i}: {e}")))?;
            shapes.push(current.clone());
        }
        if current != [NUM_EMOTIONS] {
            return Err(Error::Shape(format!(
                "the softmax output must have {NUM_EMOTIONS} units, got {current:?}"
            )));
        }
        Ok(Model {
            input_shape,
            layers,
            params,
            shapes,
        })
    }

    /// The documented default network for `height × width` input:
    /// Conv(32) Conv(64) Pool Conv(64) Pool Conv(128) Conv(128) Pool Flatten
    /// Dense(256) Dense(128) Dense(7) Softmax, ReLU after every conv and hidden dense.
    pub fn default_architecture(height: usize, width: usize) -> Result<Self> {
        Self::new([1, height, width], default_layers(height, width))
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    /// Output shape of each layer.
    pub fn layer_shapes(&self) -> &[Vec<usize>] {
        &self.shapes
    }

    /// Parameters per layer; `None` for parameter-free layers.
    pub fn parameters(&self) -> &[Option<LayerParams<T>>] {
        &self.params
    }

    pub fn parameters_mut(&mut self) -> impl Iterator<Item = &mut LayerParams<T>> {
        self.params.iter_mut().flatten()
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().flatten().map(|p| p.weights.len() + p.bias.len()).sum()
    }

    /// True when the stack has exactly five convolutions, three pools and
    /// two hidden dense layers in front of the 7-unit output layer.
    pub fn has_reference_topology(&self) -> bool {
        let count = |f: fn(&LayerSpec) -> bool| self.layers.iter().filter(|l| f(l)).count();
        count(|l| matches!(l, LayerSpec::Conv2D { .. })) == 5
            && count(|l| matches!(l, LayerSpec::MaxPool)) == 3
            && count(|l| matches!(l, LayerSpec::Dense { .. })) == 3
    }

    /// He-normal weights (std = sqrt(2 / fan_in)) and zero biases, fully
    /// determined by `seed`.
    pub fn init_parameters(mut self, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (layer, slot) in self.layers.iter().zip(self.params.iter_mut()) {
            let Some(p) = slot else { continue };
            let std = (2.0 / layer.fan_in() as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("positive std");
            for w in p.weights.data_mut() {
                *w = T::from_f64_lossy(normal.sample(&mut rng));
            }
            p.bias.data_mut().iter_mut().for_each(|b| *b = T::zero());
        }
        self
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            input_shape: self.input_shape,
            layers: self.layers.clone(),
            params: self.params.iter().map(|p| p.as_ref().map(LayerParams::cast)).collect(),
            shapes: self.shapes.clone(),
        }
    }

    /// Runs the network, keeping every intermediate activation for the
    /// backward pass.
    pub fn forward(&self, input: &Tensor<T>) -> Result<ForwardPass<T>> {
        if input.shape() != self.input_shape {
            return Err(Error::Shape(format!(
                "model expects input {:?}, got {:?}",
                self.input_shape,
                input.shape()
            )));
        }
        let mut outputs: Vec<Tensor<T>> = Vec::with_capacity(self.layers.len());
        let mut pool_indices = Vec::with_capacity(self.layers.len());
        let mut cols = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let x = if i == 0 { input } else { &outputs[i - 1] };
            let mut indices = None;
            let mut col = None;
            let y = match layer {
                LayerSpec::Conv2D { .. } => {
                    let p = self.params[i].as_ref().expect("conv has parameters");
                    let (y, c) = layers::conv2d_forward_cols(x, &p.weights, p.bias.data(), Padding::Same)?;
                    col = Some(c);
                    y
                }
                LayerSpec::ReLU => layers::relu_forward(x),
                LayerSpec::MaxPool => {
                    let (y, idx) = layers::maxpool_forward(x)?;
                    indices = Some(idx);
                    y
                }
                LayerSpec::Flatten => layers::flatten(x),
                LayerSpec::Dense { .. } => {
                    let p = self.params[i].as_ref().expect("dense has parameters");
                    layers::dense_forward(x.data(), &p.weights, p.bias.data())?
                }
                LayerSpec::Softmax => Tensor::vector(layers::softmax(x.data())?)?,
            };
            outputs.push(y);
            pool_indices.push(indices);
            cols.push(col);
        }
        Ok(ForwardPass {
            input: input.clone(),
            outputs,
            pool_indices,
            cols,
        })
    }

    /// Output probabilities only.
    pub fn predict(&self, input: &Tensor<T>) -> Result<Vec<T>> {
        Ok(self.forward(input)?.outputs.pop().expect("non-empty stack").into_data())
    }

    /// Gradients of the cross-entropy loss `-ln p[target]` with respect to
    /// every parameter, given the activations of a matching forward pass.
    pub fn backward(&self, pass: &ForwardPass<T>, target: usize) -> Result<Gradients<T>> {
        let mut grads = Gradients::zeros_like(self);
        self.backward_into(pass, target, &mut grads)?;
        Ok(grads)
    }

    /// As [`Model::backward`], adding the gradients into `grads`.
    pub fn backward_into(&self, pass: &ForwardPass<T>, target: usize, grads: &mut Gradients<T>) -> Result<()> {
        if target >= NUM_EMOTIONS {
            return Err(Error::Usage(format!("target class {target} outside 0..{NUM_EMOTIONS}")));
        }
        self.check_pass(pass)?;
        if !grads.is_congruent_with(self) {
            return Err(Error::Usage("gradient buffer does not match the model".into()));
        }

        let n = self.layers.len();
        // Softmax and cross-entropy combine to p - onehot at the logits.
        let mut grad: Tensor<T> = pass.outputs[n - 1].clone();
        grad.data_mut()[target] -= T::one();
        let first_param = self.params.iter().position(Option::is_some).unwrap_or(n);

        for i in (0..n - 1).rev() {
            let x = if i == 0 { &pass.input } else { &pass.outputs[i - 1] };
            let need_input = i > first_param;
            grad = match self.layers[i] {
                LayerSpec::Conv2D { .. } => {
                    let p = self.params[i].as_ref().expect("conv has parameters");
                    let g = grads.layers[i].as_mut().expect("congruent");
                    let col = pass.cols[i].as_ref().expect("checked in check_pass");
                    let dx = layers::conv2d_backward_cols(
                        x.shape(),
                        col,
                        &p.weights,
                        &grad,
                        Padding::Same,
                        g.weights.data_mut(),
                        g.bias.data_mut(),
                        need_input,
                    )?;
                    match dx {
                        Some(dx) => dx,
                        None => break,
                    }
                }
                LayerSpec::Dense { .. } => {
                    let p = self.params[i].as_ref().expect("dense has parameters");
                    let g = grads.layers[i].as_mut().expect("congruent");
                    let dx = layers::dense_backward_into(
                        x.data(),
                        &p.weights,
                        grad.data(),
                        g.weights.data_mut(),
                        g.bias.data_mut(),
                        need_input,
                    )?;
                    match dx {
                        Some(dx) => Tensor::vector(dx)?,
                        None => break,
                    }
                }
                LayerSpec::ReLU => layers::relu_backward(x, &grad)?,
                LayerSpec::MaxPool => {
                    let idx = pass.pool_indices[i].as_ref().expect("checked in check_pass");
                    layers::maxpool_backward(&grad, idx, x.shape())?
                }
                LayerSpec::Flatten => grad.reshape(x.shape())?,
                LayerSpec::Softmax => unreachable!("softmax only appears last"),
            };
            if i <= first_param {
                break;
            }
        }
        Ok(())
    }

    fn check_pass(&self, pass: &ForwardPass<T>) -> Result<()> {
        let stale = || Error::Usage("activations do not come from a forward pass of this model".into());
        if pass.input.shape() != self.input_shape
            || pass.outputs.len() != self.layers.len()
            || pass.cols.len() != self.layers.len()
        {
            return Err(stale());
        }
        let columns_match = self.layers.iter().zip(&pass.cols).all(|(layer, col)| {
            matches!(layer, LayerSpec::Conv2D { .. }) == col.is_some()
        });
        if !columns_match {
            return Err(stale());
        }
        for ((out, shape), (layer, idx)) in pass
            .outputs
            .iter()
            .zip(&self.shapes)
            .zip(self.layers.iter().zip(&pass.pool_indices))
        {
            if out.shape() != shape.as_slice() {
                return Err(stale());
            }
            let pooled = matches!(layer, LayerSpec::MaxPool);
            match idx {
                Some(idx) if pooled && idx.len() == out.len() => {}
                None if !pooled => {}
                _ => return Err(stale()),
            }
        }
        Ok(())
    }
}

pub(crate) fn default_layers(height: usize, width: usize) -> Vec<LayerSpec> {
    use LayerSpec::*;
    let flat = 128 * (height / 8) * (width / 8);
    vec![
        Conv2D { in_channels: 1, out_channels: 32 },
        ReLU,
        Conv2D { in_channels: 32, out_channels: 64 },
        ReLU,
        MaxPool,
        Conv2D { in_channels: 64, out_channels: 64 },
        ReLU,
        MaxPool,
        Conv2D { in_channels: 64, out_channels: 128 },
        ReLU,
        Conv2D { in_channels: 128, out_channels: 128 },
        ReLU,
        MaxPool,
        Flatten,
        Dense { in_units: flat, out_units: 256 },
        ReLU,
        Dense { in_units: 256, out_units: 128 },
        ReLU,
        Dense { in_units: 128, out_units: NUM_EMOTIONS },
        Softmax,
    ]
}

/// Activations cached by [`Model::forward`].
#[derive(Debug, Clone)]
pub struct ForwardPass<T = f32> {
    pub input: Tensor<T>,
    /// Output of each layer in stack order; the last is the probability vector.
    pub outputs: Vec<Tensor<T>>,
    pool_indices: Vec<Option<Vec<usize>>>,
    /// Unfolded convolution inputs, reused by the backward pass.
    cols: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> ForwardPass<T> {
    pub fn probabilities(&self) -> &[T] {
        self.outputs.last().expect("non-empty stack").data()
    }

    /// Logits feeding the softmax.
    pub fn logits(&self) -> &[T] {
        let n = self.outputs.len();
        if n >= 2 {
            self.outputs[n - 2].data()
        } else {
            self.input.data()
        }
    }

    pub fn scores(&self) -> Result<EmotionScores> {
        EmotionScores::from_probs(self.probabilities())
    }
}

/// Parameter gradients, congruent with [`Model::parameters`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T = f32> {
    layers: Vec<Option<LayerParams<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(model: &Model<T>) -> Self {
        Gradients {
            layers: model.layers.iter().map(LayerParams::zeros).collect(),
        }
    }

    pub fn layers(&self) -> &[Option<LayerParams<T>>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut LayerParams<T>> {
        self.layers.iter_mut().flatten()
    }

    /// Whether every tensor matches the corresponding model parameter shape.
    pub fn is_congruent_with(&self, model: &Model<T>) -> bool {
        self.layers.len() == model.params.len()
            && self.layers.iter().zip(&model.params).all(|(g, p)| match (g, p) {
                (Some(g), Some(p)) => g.weights.shape() == p.weights.shape() && g.bias.shape() == p.bias.shape(),
                (None, None) => true,
                _ => false,
            })
    }

    pub fn add_assign(&mut self, other: &Gradients<T>) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::Usage("adding gradients of different models".into()));
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            match (a, b) {
                (Some(a), Some(b)) if a.weights.shape() == b.weights.shape() => {
                    add_into(a.weights.data_mut(), b.weights.data());
                    add_into(a.bias.data_mut(), b.bias.data());
                }
                (None, None) => {}
                _ => return Err(Error::Usage("adding gradients of different models".into())),
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: T) {
        for p in self.layers_mut() {
            p.weights.data_mut().iter_mut().for_each(|v| *v *= factor);
            p.bias.data_mut().iter_mut().for_each(|v| *v *= factor);
        }
    }

    /// All gradient values in parameter order (weights then bias per layer).
    pub fn flat(&self) -> Vec<T> {
        self.layers
            .iter()
            .flatten()
            .flat_map(|p| p.weights.data().iter().chain(p.bias.data()).copied())
            .collect()
    }
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
