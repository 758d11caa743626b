//! Empirical check of the windowed-to-infinite transfer bound.
//!
//! With H the product of per-layer filter L1 norms, L layers each widening the
//! dependency region by K meters, and a model trained on inputs truncated to
//! width A with loss measured on width B,
//!
//! ```text
//! C   = (H² / B²) · max(0, (B + L·K)² − A²)
//! ℒ  ≤ ℒ_⊓ + E[X²]·C + sqrt(ℒ_⊓ · E[X²] · C)
//! ```
//!
//! The infinite-domain loss ℒ is approximated by the windowed loss at a much
//! larger window, and both sides are Monte Carlo estimates.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Model;
use crate::raster::IntensityImage;
use crate::train::{evaluate_loss, mean_and_stderr, SampleSource, WindowSpec};

/// `(H²/B²)·max(0, (B + L·K)² − A²)`.
pub fn bound_constant(h: f64, a: f64, b: f64, layers: usize, k: f64) -> f64 {
    let reach = b + layers as f64 * k;
    let excess = reach * reach - a * a;
    if excess <= 0.0 {
        return 0.0;
    }
    h * h / (b * b) * excess
}

/// `ℒ_⊓ + E[X²]·C + sqrt(ℒ_⊓·E[X²]·C)`.
pub fn bound_rhs(loss_window: f64, signal_power: f64, c: f64) -> f64 {
    let t = signal_power * c;
    loss_window + t + libm::sqrt(loss_window * t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalPower {
    pub mean: f64,
    pub std_error: f64,
    pub frames: usize,
}

/// Mean of V² over frames and pixels of the newest observation channel. The
/// standard error treats frames as the independent unit.
pub fn estimate_signal_power(data: &dyn SampleSource) -> Result<SignalPower> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut per_frame = Vec::with_capacity(data.len());
    for i in 0..data.len() {
        let input = data.sample(i)?.input;
        let newest = input.channel(input.channels - 1);
        let sum: f64 = newest.iter().map(|&v| v as f64 * v as f64).sum();
        per_frame.push(sum / newest.len() as f64);
    }
    let (mean, std_error) = mean_and_stderr(&per_frame);
    Ok(SignalPower {
        mean,
        std_error,
        frames: per_frame.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub train_window: WindowSpec,
    pub eval_window: WindowSpec,
    pub loss_window: f64,
    pub loss_window_stderr: f64,
    pub loss_large: f64,
    pub loss_large_stderr: f64,
    pub h: f64,
    pub layers: usize,
    /// Receptive field in pixels; L·K is taken as this times the resolution.
    pub receptive_field_px: usize,
    pub lk_m: f64,
    pub c: f64,
    pub signal_power: f64,
    pub signal_power_stderr: f64,
    pub rhs: f64,
    /// Three combined standard errors of the two loss estimates.
    pub margin: f64,
    pub holds: bool,
}

/// Estimates ℒ_⊓ on `small` with the training window and ℒ̂ on `large` with
/// `eval_window`, then evaluates the bound. E[X²] is estimated on `large`.
pub fn check_bound(
    model: &Model<f32>,
    train_window: WindowSpec,
    small: &dyn SampleSource,
    eval_window: WindowSpec,
    large: &dyn SampleSource,
) -> Result<BoundReport> {
    train_window.validate()?;
    eval_window.validate()?;
    if eval_window.input_width <= train_window.output_width {
        return Err(Error::InvalidConfig(
            "evaluation width must exceed the training output window".into(),
        ));
    }
    if small.is_empty() || large.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let resolution = small.sample(0)?.target.grid.resolution;
    let lw = evaluate_loss(model, small, train_window)?;
    let ll = evaluate_loss(model, large, eval_window)?;
    let power = estimate_signal_power(large)?;
    let h = model.filter_l1_product();
    let layers = model.spec.num_layers();
    let rf = model.spec.receptive_field();
    let lk = rf as f64 * resolution;
    let c = bound_constant(
        h,
        train_window.input_width,
        train_window.output_width,
        layers,
        lk / layers as f64,
    );
    let rhs = bound_rhs(lw.mean_loss, power.mean, c);
    let margin = 3.0 * libm::sqrt(lw.std_error * lw.std_error + ll.std_error * ll.std_error);
    Ok(BoundReport {
        train_window,
        eval_window,
        loss_window: lw.mean_loss,
        loss_window_stderr: lw.std_error,
        loss_large: ll.mean_loss,
        loss_large_stderr: ll.std_error,
        h,
        layers,
        receptive_field_px: rf,
        lk_m: lk,
        c,
        signal_power: power.mean,
        signal_power_stderr: power.std_error,
        rhs,
        margin,
        holds: ll.mean_loss <= rhs + margin,
    })
}

/// Normalized autocovariance of one channel along x, averaged over images,
/// for offsets `0..=max_offset` pixels. Entry 0 is 1 unless the images are
/// constant. A stationarity diagnostic only.
pub fn spatial_autocorrelation(images: &[IntensityImage], channel: usize, max_offset: usize) -> Vec<f64> {
    let mut cov = alloc::vec![0.0f64; max_offset + 1];
    let mut count = alloc::vec![0usize; max_offset + 1];
    let total: usize = images.iter().map(|im| im.channel(channel).len()).sum();
    if total == 0 {
        return cov;
    }
    let mean = images
        .iter()
        .flat_map(|im| im.channel(channel).iter())
        .map(|&v| v as f64)
        .sum::<f64>()
        / total as f64;
    for im in images {
        let n = im.width();
        let ch = im.channel(channel);
        for i in 0..n {
            for d in 0..=max_offset.min(n.saturating_sub(i + 1)) {
                for j in 0..n {
                    cov[d] += (ch[i * n + j] as f64 - mean) * (ch[(i + d) * n + j] as f64 - mean);
                    count[d] += 1;
                }
            }
        }
    }
    for (c, &k) in cov.iter_mut().zip(&count) {
        if k > 0 {
            *c /= k as f64;
        }
    }
    let var = cov[0];
    if var > 0.0 {
        for c in &mut cov {
            *c /= var;
        }
    }
    cov
}
