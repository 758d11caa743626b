//! Windowed-loss training.
//!
//! Inputs are truncated to the centered square of width A, and the squared
//! error against the target image is integrated over the centered square of
//! width B and normalized by B². The optimizer is AdamW with decoupled weight
//! decay.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Gradients, Model, ModelSpec, Real};
use crate::raster::{window_in_place, window_mask, GridSpec, IntensityImage, RasterizedSimulation};
use crate::rng::{self, Purpose, NO_STEP};

/// Input window width A and output window width B, meters, centered at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub input_width: f64,
    pub output_width: f64,
}

impl WindowSpec {
    pub fn new(input_width: f64, output_width: f64) -> Result<Self> {
        let w = WindowSpec {
            input_width,
            output_width,
        };
        w.validate()?;
        Ok(w)
    }

    /// A = B = `width`.
    pub fn full(width: f64) -> Self {
        WindowSpec {
            input_width: width,
            output_width: width,
        }
    }

    /// Output window shrunk so every output pixel center in C_B depends only
    /// on input pixels in C_A, and A ≥ B + receptive_field·ρ.
    pub fn padding_free(input_width: f64, spec: &ModelSpec, resolution: f64) -> Result<Self> {
        let (behind, ahead) = spec.dependency_extent();
        let margin = (2 * behind.max(ahead) + 1).max(spec.receptive_field()) as f64 * resolution;
        let output_width = input_width - margin;
        if output_width <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "input window {input_width} m is narrower than the receptive margin {margin} m"
            )));
        }
        Self::new(input_width, output_width)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.output_width > 0.0 && self.input_width >= self.output_width && self.input_width.is_finite()) {
            return Err(Error::InvalidConfig("window needs A ≥ B > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            learning_rate: 6.11e-6,
            epochs: 84,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.01,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || !(self.learning_rate >= 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidConfig("batch size ≥ 1, lr ≥ 0, betas in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Monte Carlo estimate of a windowed loss, intensity² units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub mean_loss: f64,
    pub std_error: f64,
    pub num_samples: usize,
    pub window: WindowSpec,
}

/// Mean and standard error of the mean.
pub(crate) fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, libm::sqrt(var / n as f64))
}

/// An observation-history input and its target image on the same grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: IntensityImage,
    pub target: IntensityImage,
}

/// Random-access training or evaluation data.
pub trait SampleSource {
    fn len(&self) -> usize;
    fn sample(&self, index: usize) -> Result<Sample>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl SampleSource for [Sample] {
    fn len(&self) -> usize {
        <[Sample]>::len(self)
    }

    fn sample(&self, index: usize) -> Result<Sample> {
        self.get(index)
            .cloned()
            .ok_or_else(|| Error::Dataset(format!("sample {index} out of range")))
    }
}

impl SampleSource for Vec<Sample> {
    fn len(&self) -> usize {
        self.as_slice().len()
    }

    fn sample(&self, index: usize) -> Result<Sample> {
        self.as_slice().sample(index)
    }
}

/// Samples built on demand from rasterized simulations, stacking the
/// observation history at access time. Sample order is simulation-major.
#[derive(Debug, Clone)]
pub struct SimulationSamples {
    sims: Vec<RasterizedSimulation>,
    history_length: usize,
    index: Vec<(usize, usize)>,
}

impl SimulationSamples {
    pub fn new(sims: Vec<RasterizedSimulation>, history_length: usize) -> Self {
        let index = sims
            .iter()
            .enumerate()
            .flat_map(|(s, sim)| (0..sim.observations.len()).map(move |t| (s, t)))
            .collect();
        SimulationSamples {
            sims,
            history_length,
            index,
        }
    }

    pub fn simulations(&self) -> &[RasterizedSimulation] {
        &self.sims
    }
}

impl SampleSource for SimulationSamples {
    fn len(&self) -> usize {
        self.index.len()
    }

    fn sample(&self, index: usize) -> Result<Sample> {
        let &(s, t) = self
            .index
            .get(index)
            .ok_or_else(|| Error::Dataset(format!("sample {index} out of range")))?;
        let sim = &self.sims[s];
        Ok(Sample {
            input: sim.history(t, self.history_length)?,
            target: sim.targets[t].clone(),
        })
    }
}

fn check_window_fits(grid: &GridSpec, width: f64) -> Result<()> {
    let extent = grid.extent();
    if width > extent * (1.0 + 1e-12) {
        return Err(Error::WindowTooLarge {
            width_m: width,
            extent_m: extent,
        });
    }
    Ok(())
}

/// (1/B²)·Σ_{p ∈ C_B} (prediction − target)²·ρ², the Riemann sum of the
/// windowed squared error. Only the first channel of each image is used.
pub fn windowed_loss(prediction: &IntensityImage, target: &IntensityImage, output_width: f64) -> Result<f64> {
    if prediction.grid != target.grid {
        return Err(Error::GridMismatch("prediction and target grids differ".into()));
    }
    check_window_fits(&target.grid, output_width)?;
    let mask = window_mask(&target.grid, output_width);
    Ok(masked_loss(prediction.channel(0), target.channel(0), &mask, &target.grid, output_width))
}

fn masked_loss(pred: &[f32], target: &[f32], mask: &[bool], grid: &GridSpec, b: f64) -> f64 {
    let sum: f64 = pred
        .iter()
        .zip(target)
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|((&p, &t), _)| {
            let d = p as f64 - t as f64;
            d * d
        })
        .sum();
    sum * grid.pixel_area() / (b * b)
}

/// Runs the model on an input truncated to C_A.
fn windowed_prediction(model: &Model<f32>, input: &IntensityImage, input_width: f64) -> Result<IntensityImage> {
    let mut x = input.clone();
    window_in_place(&mut x, input_width);
    model.forward(&x)
}

/// Monte Carlo mean and standard error of the windowed loss over a dataset.
pub fn evaluate_loss(model: &Model<f32>, data: &dyn SampleSource, window: WindowSpec) -> Result<LossReport> {
    window.validate()?;
    let mut losses = Vec::with_capacity(data.len());
    let mut mask: Option<(GridSpec, Vec<bool>)> = None;
    for i in 0..data.len() {
        let s = data.sample(i)?;
        check_window_fits(&s.target.grid, window.input_width)?;
        let pred = windowed_prediction(model, &s.input, window.input_width)?;
        if mask.as_ref().map(|(g, _)| *g != s.target.grid).unwrap_or(true) {
            mask = Some((s.target.grid, window_mask(&s.target.grid, window.output_width)));
        }
        let (grid, m) = mask.as_ref().expect("set above");
        losses.push(masked_loss(pred.channel(0), s.target.channel(0), m, grid, window.output_width));
    }
    let (mean_loss, std_error) = mean_and_stderr(&losses);
    Ok(LossReport {
        mean_loss,
        std_error,
        num_samples: losses.len(),
        window,
    })
}

/// AdamW state, decoupled weight decay applied to every parameter.
#[derive(Debug, Clone)]
pub struct AdamW {
    config: TrainConfig,
    first: Gradients<f32>,
    second: Gradients<f32>,
    step: i32,
}

impl AdamW {
    pub fn new(spec: &ModelSpec, config: &TrainConfig) -> Self {
        AdamW {
            config: config.clone(),
            first: Gradients::zeros(spec),
            second: Gradients::zeros(spec),
            step: 0,
        }
    }

    pub fn step(&mut self, model: &mut Model<f32>, grads: &Gradients<f32>) {
        self.step += 1;
        let c = &self.config;
        let lr = c.learning_rate;
        let bc1 = 1.0 - libm::pow(c.beta1, self.step as f64);
        let bc2 = 1.0 - libm::pow(c.beta2, self.step as f64);
        let decay = (1.0 - lr * c.weight_decay) as f32;
        let (b1, b2) = (c.beta1 as f32, c.beta2 as f32);
        let step_size = (lr / bc1) as f32;
        let bc2_sqrt = libm::sqrt(bc2) as f32;
        let eps = c.epsilon as f32;
        for (l, layer) in model.layers.iter_mut().enumerate() {
            let g = &grads.layers[l];
            let m = &mut self.first.layers[l];
            let v = &mut self.second.layers[l];
            let groups = [
                (&mut layer.weight, &g.weight, &mut m.weight, &mut v.weight),
                (&mut layer.bias, &g.bias, &mut m.bias, &mut v.bias),
            ];
            for (p, g, m, v) in groups {
                for k in 0..p.len() {
                    let gk = g[k];
                    m[k] = b1 * m[k] + (1.0 - b1) * gk;
                    v[k] = b2 * v[k] + (1.0 - b2) * gk * gk;
                    let denom = libm::sqrtf(v[k]) / bc2_sqrt + eps;
                    p[k] = p[k] * decay - step_size * m[k] / denom;
                }
            }
        }
    }
}

/// Trains in place and returns one report per epoch (training loss over the
/// epoch's samples, evaluated before each update). `on_epoch` is called after
/// every epoch.
pub fn train(
    model: &mut Model<f32>,
    data: &dyn SampleSource,
    window: WindowSpec,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(usize, &LossReport),
) -> Result<Vec<LossReport>> {
    window.validate()?;
    config.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let scale = model.spec.intensity_scale;
    let mut optimizer = AdamW::new(&model.spec, config);
    let mut grads = Gradients::<f32>::zeros(&model.spec);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut mask: Option<(GridSpec, Vec<bool>)> = None;
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let mut shuffle = rng::stream(config.seed, epoch as u32, NO_STEP, Purpose::Shuffle);
        order.shuffle(&mut shuffle);
        let mut losses = Vec::with_capacity(order.len());
        for batch in order.chunks(config.batch_size) {
            grads.fill_zero();
            let inv_batch = 1.0 / batch.len() as f64;
            for &idx in batch {
                let s = data.sample(idx)?;
                let grid = s.target.grid;
                if s.input.grid != grid {
                    return Err(Error::GridMismatch(format!("sample {idx}: input and target grids differ")));
                }
                check_window_fits(&grid, window.input_width)?;
                if mask.as_ref().map(|(g, _)| *g != grid).unwrap_or(true) {
                    mask = Some((grid, window_mask(&grid, window.output_width)));
                }
                let (_, m) = mask.as_ref().expect("set above");

                let mut input = s.input;
                window_in_place(&mut input, window.input_width);
                let cache = model.forward_raw(model.scaled_input(&input)?, input.width())?;
                let out = cache.output();

                // Loss in scaled units; gradient of the batch-mean loss.
                let norm = grid.pixel_area() / (window.output_width * window.output_width);
                let gscale = (2.0 * norm * inv_batch) as f32;
                let mut sq = 0.0f64;
                let grad_out: Vec<f32> = out
                    .iter()
                    .zip(s.target.channel(0))
                    .zip(m.iter())
                    .map(|((&o, &t), &inside)| {
                        if !inside {
                            return 0.0;
                        }
                        let d = o - (t as f64 * scale) as f32;
                        sq += d as f64 * d as f64;
                        gscale * d
                    })
                    .collect();
                losses.push(sq * norm / (scale * scale));
                model.backward_raw(&cache, &grad_out, &mut grads, false);
            }
            optimizer.step(model, &grads);
        }
        let (mean_loss, std_error) = mean_and_stderr(&losses);
        let report = LossReport {
            mean_loss,
            std_error,
            num_samples: losses.len(),
            window,
        };
        on_epoch(epoch, &report);
        history.push(report);
    }
    Ok(history)
}

/// Sum of squared parameter differences; used to confirm updates.
pub fn parameter_distance<T: Real>(a: &Model<T>, b: &Model<T>) -> f64 {
    a.parameters()
        .zip(b.parameters())
        .map(|(x, y)| {
            let d = x.f64() - y.f64();
            d * d
        })
        .sum()
}
