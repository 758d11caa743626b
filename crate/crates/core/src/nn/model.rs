use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::conv::{self, Geometry};
use super::spec::{Activation, LayerKind, LayerSpec, ModelSpec};
use super::Real;
use crate::error::{Error, Result};
use crate::raster::IntensityImage;
use crate::rng::{self, Purpose, NO_STEP};

/// Weights and biases of one layer.
///
/// Conv weights are `[out][in][k][k]`; transpose-conv weights are
/// `[in][out][k][k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams<T> {
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> LayerParams<T> {
    fn zeros(spec: &LayerSpec) -> Self {
        let k2 = spec.kernel_size * spec.kernel_size;
        LayerParams {
            weight: vec![T::zero(); spec.in_channels * spec.out_channels * k2],
            bias: vec![T::zero(); spec.out_channels],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model<T = f32> {
    pub spec: ModelSpec,
    pub layers: Vec<LayerParams<T>>,
}

/// Parameter gradients, shaped like [`Model::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<LayerParams<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn zeros(spec: &ModelSpec) -> Self {
        Gradients {
            layers: spec.layers.iter().map(LayerParams::zeros).collect(),
        }
    }

    pub fn fill_zero(&mut self) {
        for l in &mut self.layers {
            l.weight.fill(T::zero());
            l.bias.fill(T::zero());
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.layers.iter().flat_map(|l| l.weight.iter().chain(l.bias.iter()))
    }
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    /// `activations[0]` is the scaled input; `activations[l + 1]` is the
    /// output of layer `l`.
    activations: Vec<Vec<T>>,
    widths: Vec<usize>,
}

impl<T: Real> ForwardCache<T> {
    /// Network output in scaled units, `1 × n × n`.
    pub fn output(&self) -> &[T] {
        self.activations.last().expect("non-empty")
    }

    /// Output of layer `l`, after its activation.
    pub fn layer_output(&self, l: usize) -> &[T] {
        &self.activations[l + 1]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().expect("non-empty")
    }
}

/// Initializes a model with He-uniform weights (fan-in scaled, with the
/// leaky-ReLU gain) and zero biases. Deterministic in `seed`.
pub fn build_model<T: Real>(spec: &ModelSpec, seed: u64) -> Result<Model<T>> {
    spec.validate()?;
    let mut rng = rng::stream(seed, 0, NO_STEP, Purpose::ModelInit);
    let layers = spec
        .layers
        .iter()
        .map(|layer| {
            let mut p = LayerParams::<T>::zeros(layer);
            let k2 = (layer.kernel_size * layer.kernel_size) as f64;
            let fan_in = match layer.kind {
                LayerKind::Conv => layer.in_channels as f64 * k2,
                LayerKind::TransposeConv => {
                    (layer.in_channels as f64 * k2 / (layer.stride * layer.stride) as f64).max(1.0)
                }
            };
            let gain = match layer.activation {
                Activation::LeakyRelu { slope } => libm::sqrt(2.0 / (1.0 + slope * slope)),
                Activation::Identity => 1.0,
            };
            let bound = gain * libm::sqrt(3.0 / fan_in);
            for w in &mut p.weight {
                *w = T::of(rng.random_range(-bound..bound));
            }
            p
        })
        .collect();
    Ok(Model {
        spec: spec.clone(),
        layers,
    })
}

impl<T: Real> Model<T> {
    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn parameters(&self) -> impl Iterator<Item = &T> {
        self.layers.iter().flat_map(|l| l.weight.iter().chain(l.bias.iter()))
    }

    pub fn is_finite(&self) -> bool {
        self.parameters().all(|p| p.is_finite())
    }

    /// Converts every parameter to another element type.
    pub fn cast<U: Real>(&self) -> Model<U> {
        let conv = |v: &[T]| v.iter().map(|x| U::of(x.f64())).collect();
        Model {
            spec: self.spec.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    weight: conv(&l.weight),
                    bias: conv(&l.bias),
                })
                .collect(),
        }
    }

    pub fn check_input_width(&self, width: usize) -> Result<()> {
        let multiple = self.spec.required_multiple();
        if width == 0 || !width.is_multiple_of(multiple) {
            return Err(Error::IndivisibleInput { width, multiple });
        }
        Ok(())
    }

    /// Runs the layer stack on an already scaled `history_length × n × n`
    /// tensor and keeps every activation.
    pub fn forward_raw(&self, input: Vec<T>, width: usize) -> Result<ForwardCache<T>> {
        self.check_input_width(width)?;
        let expected = self.spec.history_length * width * width;
        if input.len() != expected {
            return Err(Error::GridMismatch(format!(
                "input has {} values, expected {expected}",
                input.len()
            )));
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut widths = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input);
        widths.push(width);
        for (spec, params) in self.spec.layers.iter().zip(&self.layers) {
            let x = activations.last().expect("non-empty");
            let n = *widths.last().expect("non-empty");
            let (mut y, n_out) = match spec.kind {
                LayerKind::Conv => {
                    let g = Geometry::new(n, spec.kernel_size, spec.stride);
                    (conv::conv_forward(x, spec.in_channels, &params.weight, &params.bias, &g), g.coarse)
                }
                LayerKind::TransposeConv => {
                    let g = Geometry::new(n * spec.stride, spec.kernel_size, spec.stride);
                    (conv::transpose_forward(x, spec.in_channels, &params.weight, &params.bias, &g), g.fine)
                }
            };
            if let Activation::LeakyRelu { slope } = spec.activation {
                let slope = T::of(slope);
                for v in &mut y {
                    if *v < T::zero() {
                        *v = *v * slope;
                    }
                }
            }
            activations.push(y);
            widths.push(n_out);
        }
        Ok(ForwardCache { activations, widths })
    }

    /// Reverse-mode pass from the gradient at the (scaled) output.
    /// Accumulates into `grads` and returns the gradient with respect to the
    /// scaled input when `want_input_grad`.
    pub fn backward_raw(
        &self,
        cache: &ForwardCache<T>,
        grad_output: &[T],
        grads: &mut Gradients<T>,
        want_input_grad: bool,
    ) -> Option<Vec<T>> {
        assert_eq!(grad_output.len(), cache.output().len(), "output gradient shape");
        let mut dy = grad_output.to_vec();
        for l in (0..self.layers.len()).rev() {
            let spec = &self.spec.layers[l];
            let params = &self.layers[l];
            let y = &cache.activations[l + 1];
            if let Activation::LeakyRelu { slope } = spec.activation {
                let slope = T::of(slope);
                for (d, &out) in dy.iter_mut().zip(y) {
                    if out <= T::zero() {
                        *d = *d * slope;
                    }
                }
            }
            let x = &cache.activations[l];
            let n_in = cache.widths[l];
            let need_dx = l > 0 || want_input_grad;
            let g = &mut grads.layers[l];
            let dx = match spec.kind {
                LayerKind::Conv => {
                    let geom = Geometry::new(n_in, spec.kernel_size, spec.stride);
                    conv::conv_backward(x, spec.in_channels, &params.weight, &dy, &geom, &mut g.weight, &mut g.bias, need_dx)
                }
                LayerKind::TransposeConv => {
                    let geom = Geometry::new(n_in * spec.stride, spec.kernel_size, spec.stride);
                    conv::transpose_backward(x, spec.in_channels, &params.weight, &dy, &geom, &mut g.weight, &mut g.bias, need_dx)
                }
            };
            dy = dx?;
        }
        Some(dy)
    }

    /// Maps an observation-history image to an estimated target image.
    pub fn forward(&self, input: &IntensityImage) -> Result<IntensityImage> {
        let cache = self.forward_raw(self.scaled_input(input)?, input.width())?;
        let inv = 1.0 / self.spec.intensity_scale;
        let values = cache.output().iter().map(|v| (v.f64() * inv) as f32).collect();
        IntensityImage::from_values(input.grid, 1, values)
    }

    /// Converts an input image to the network's element type and scale.
    pub fn scaled_input(&self, input: &IntensityImage) -> Result<Vec<T>> {
        if input.channels != self.spec.history_length {
            return Err(Error::GridMismatch(format!(
                "model expects {} input channels, image has {}",
                self.spec.history_length, input.channels
            )));
        }
        self.check_input_width(input.width())?;
        let s = self.spec.intensity_scale;
        Ok(input.values.iter().map(|&v| T::of(v as f64 * s)).collect())
    }

    /// Per-layer L1 gain: max over output channels of the summed absolute
    /// weights over input channels and taps. Biases are excluded.
    pub fn layer_l1_gains(&self) -> Vec<f64> {
        self.spec
            .layers
            .iter()
            .zip(&self.layers)
            .map(|(spec, p)| {
                let k2 = spec.kernel_size * spec.kernel_size;
                let mut per_out = vec![0.0f64; spec.out_channels];
                for i in 0..spec.in_channels {
                    for o in 0..spec.out_channels {
                        let start = match spec.kind {
                            LayerKind::Conv => (o * spec.in_channels + i) * k2,
                            LayerKind::TransposeConv => (i * spec.out_channels + o) * k2,
                        };
                        per_out[o] += p.weight[start..start + k2].iter().map(|w| w.f64().abs()).sum::<f64>();
                    }
                }
                per_out.into_iter().fold(0.0, f64::max)
            })
            .collect()
    }

    /// H: product of the per-layer L1 gains.
    pub fn filter_l1_product(&self) -> f64 {
        self.layer_l1_gains().iter().product()
    }
}
