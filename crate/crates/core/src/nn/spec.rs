use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    /// Strided convolution with zero same-padding; output width ⌈n/s⌉.
    Conv,
    /// Adjoint of the strided convolution; output width n·s.
    TransposeConv,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Activation {
    LeakyRelu { slope: f64 },
    Identity,
}

impl Activation {
    pub const DEFAULT_LEAKY: Activation = Activation::LeakyRelu { slope: 0.01 };

    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            Activation::LeakyRelu { slope } if x < 0.0 => slope * x,
            _ => x,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub kernel_size: usize,
    pub stride: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub activation: Activation,
}

impl LayerSpec {
    /// Zero padding before the first tap, for inputs divisible by the stride.
    pub(crate) fn pad(&self) -> usize {
        self.kernel_size.saturating_sub(self.stride) / 2
    }
}

/// Layer stack plus the fixed intensity scaling applied around it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub layers: Vec<LayerSpec>,
    /// Number of stacked observation frames fed as input channels.
    pub history_length: usize,
    /// The network sees `input · scale` and its output is divided by `scale`.
    pub intensity_scale: f64,
}

impl ModelSpec {
    /// `depth` strided conv layers down, `hidden_layers` 1×1 convs, `depth`
    /// transpose convs up to one output channel. Leaky-ReLU(0.01) everywhere
    /// except the linear output layer.
    pub fn encoder_decoder(
        history_length: usize,
        encoder_channels: usize,
        hidden_channels: usize,
        depth: usize,
        hidden_layers: usize,
        kernel_size: usize,
        intensity_scale: f64,
    ) -> Self {
        let act = Activation::DEFAULT_LEAKY;
        let mut layers = Vec::new();
        let mut ch = history_length;
        for _ in 0..depth {
            layers.push(LayerSpec {
                kind: LayerKind::Conv,
                kernel_size,
                stride: 2,
                in_channels: ch,
                out_channels: encoder_channels,
                activation: act,
            });
            ch = encoder_channels;
        }
        for _ in 0..hidden_layers {
            layers.push(LayerSpec {
                kind: LayerKind::Conv,
                kernel_size: 1,
                stride: 1,
                in_channels: ch,
                out_channels: hidden_channels,
                activation: act,
            });
            ch = hidden_channels;
        }
        for d in 0..depth {
            let last = d + 1 == depth;
            layers.push(LayerSpec {
                kind: LayerKind::TransposeConv,
                kernel_size,
                stride: 2,
                in_channels: ch,
                out_channels: if last { 1 } else { encoder_channels },
                activation: if last { Activation::Identity } else { act },
            });
            ch = encoder_channels;
        }
        ModelSpec {
            layers,
            history_length,
            intensity_scale,
        }
    }

    /// Three stride-2 k=9 128-channel encoder layers, four 1×1 1024-channel
    /// hidden layers, three transpose decoder layers.
    pub fn default_topology(history_length: usize, intensity_scale: f64) -> Self {
        Self::encoder_decoder(history_length, 128, 1024, 3, 4, 9, intensity_scale)
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidConfig("model has no layers".into()));
        }
        if !(self.intensity_scale > 0.0 && self.intensity_scale.is_finite()) {
            return Err(Error::InvalidConfig("intensity scale must be positive".into()));
        }
        let mut expected = self.history_length;
        for (l, layer) in self.layers.iter().enumerate() {
            if layer.kernel_size == 0 || layer.stride == 0 || layer.out_channels == 0 {
                return Err(Error::InvalidConfig(format!(
                    "layer {l}: kernel, stride and channels must be positive"
                )));
            }
            if layer.in_channels != expected {
                return Err(Error::ChannelMismatch {
                    layer: l,
                    expected,
                    found: layer.in_channels,
                });
            }
            if let Activation::LeakyRelu { slope } = layer.activation {
                if !(0.0..=1.0).contains(&slope) {
                    return Err(Error::InvalidConfig(format!("layer {l}: leaky slope outside [0, 1]")));
                }
            }
            expected = layer.out_channels;
        }
        if expected != 1 {
            return Err(Error::InvalidConfig("the last layer must have one output channel".into()));
        }
        if self.downsampling() != self.upsampling() {
            return Err(Error::InvalidConfig(
                "encoder and decoder strides must cancel so output width equals input width".into(),
            ));
        }
        Ok(())
    }

    fn downsampling(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| l.kind == LayerKind::Conv)
            .map(|l| l.stride)
            .product()
    }

    fn upsampling(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| l.kind == LayerKind::TransposeConv)
            .map(|l| l.stride)
            .product()
    }

    /// Input widths must be a multiple of this (8 for the default spec).
    pub fn required_multiple(&self) -> usize {
        self.downsampling()
    }

    /// Offsets `(behind, ahead)` such that output pixel `y` depends only on
    /// input pixels in `[y − behind, y + ahead]`, maximized over stride phases.
    pub fn dependency_extent(&self) -> (usize, usize) {
        let period = self.required_multiple().max(1) as i64;
        let base = 1_000_000 * period;
        let mut behind = 0i64;
        let mut ahead = 0i64;
        for phase in 0..period {
            let y = base + phase;
            let (lo, hi) = self.input_interval(y, y);
            behind = behind.max(y - lo);
            ahead = ahead.max(hi - y);
        }
        (behind.max(0) as usize, ahead.max(0) as usize)
    }

    /// Diameter of the input region one output pixel depends on, in input
    /// pixels, maximized over stride phases.
    pub fn receptive_field(&self) -> usize {
        let period = self.required_multiple().max(1) as i64;
        let base = 1_000_000 * period;
        (0..period)
            .map(|phase| {
                let (lo, hi) = self.input_interval(base + phase, base + phase);
                (hi - lo + 1) as usize
            })
            .max()
            .unwrap_or(1)
    }

    /// Input pixel interval feeding output pixels `[a, b]` along one axis.
    fn input_interval(&self, mut a: i64, mut b: i64) -> (i64, i64) {
        for layer in self.layers.iter().rev() {
            let k = layer.kernel_size as i64;
            let s = layer.stride as i64;
            let pad = layer.pad() as i64;
            match layer.kind {
                LayerKind::Conv => {
                    a = a * s - pad;
                    b = b * s - pad + k - 1;
                }
                LayerKind::TransposeConv => {
                    a = ceil_div(a + pad - k + 1, s);
                    b = (b + pad).div_euclid(s);
                }
            }
        }
        (a, b)
    }
}

fn ceil_div(x: i64, s: i64) -> i64 {
    -((-x).div_euclid(s))
}
