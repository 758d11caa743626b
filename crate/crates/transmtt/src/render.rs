//! Grayscale PNG panels and the OSPA-versus-width SVG plot.

use std::path::Path;

use anyhow::{anyhow, Result};
use image::{GrayImage, Luma};
use plotters::prelude::*;
use serde::{Deserialize, Serialize};
use transmtt_core::raster::IntensityImage;

use crate::report::SweepRow;

pub const PANEL_PERCENTILE: f64 = 99.5;

/// Nearest-rank percentile of `values`, `q` in percent.
pub fn percentile(values: &[f32], q: f64) -> f32 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f32::total_cmp);
    let rank = ((q / 100.0) * v.len() as f64).ceil() as usize;
    v[rank.clamp(1, v.len()) - 1]
}

/// Renders one channel with `value / norm` clamped to [0, 1]. North is up:
/// PNG rows run from the largest y down, columns along x.
pub fn render_channel(image: &IntensityImage, channel: usize, norm: f32) -> GrayImage {
    let n = image.width() as u32;
    let ch = image.channel(channel);
    let scale = if norm > 0.0 { 1.0 / norm } else { 0.0 };
    GrayImage::from_fn(n, n, |col, row| {
        let i = col as usize;
        let j = (n - 1 - row) as usize;
        let v = (ch[i * n as usize + j] * scale).clamp(0.0, 1.0);
        Luma([(v * 255.0).round() as u8])
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelMetadata {
    pub colormap: String,
    pub percentile: f64,
    /// Intensity mapped to white for observation panels, 1/m².
    pub input_norm: f32,
    /// Intensity mapped to white for output and target panels, 1/m².
    pub output_norm: f32,
    pub files: Vec<String>,
}

pub struct PanelFrame<'a> {
    pub name: String,
    /// Newest observation channel is rendered.
    pub input: &'a IntensityImage,
    pub output: &'a IntensityImage,
    pub target: &'a IntensityImage,
}

/// Writes `<name>_input.png`, `<name>_output.png` and `<name>_target.png` for
/// every frame, with one normalization for inputs and one shared by outputs
/// and targets, each at the 99.5th percentile over the whole set.
pub fn write_panels(dir: &Path, frames: &[PanelFrame]) -> Result<PanelMetadata> {
    let inputs: Vec<f32> = frames
        .iter()
        .flat_map(|f| f.input.channel(f.input.channels - 1).iter().copied())
        .collect();
    let outputs: Vec<f32> = frames
        .iter()
        .flat_map(|f| f.output.channel(0).iter().chain(f.target.channel(0)).copied())
        .collect();
    let input_norm = percentile(&inputs, PANEL_PERCENTILE);
    let output_norm = percentile(&outputs, PANEL_PERCENTILE);
    let mut files = Vec::new();
    for f in frames {
        for (suffix, img, ch, norm) in [
            ("input", f.input, f.input.channels - 1, input_norm),
            ("output", f.output, 0, output_norm),
            ("target", f.target, 0, output_norm),
        ] {
            let file = format!("{}_{suffix}.png", f.name);
            render_channel(img, ch, norm).save(dir.join(&file))?;
            files.push(file);
        }
    }
    Ok(PanelMetadata {
        colormap: "gray".into(),
        percentile: PANEL_PERCENTILE,
        input_norm,
        output_norm,
        files,
    })
}

/// Mean OSPA against window width with 95% interval error bars.
pub fn plot_sweep(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let root = SVGBackend::new(path, (640, 420)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| anyhow!("{e}"))?;
    let (w_lo, w_hi) = rows
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r.w_km), hi.max(r.w_km)));
    let y_hi = rows.iter().map(|r| r.mean_ospa_m + r.ci95_m).fold(0.0, f64::max).max(1.0) * 1.1;
    let pad = ((w_hi - w_lo) * 0.1).max(0.25);
    let mut chart = ChartBuilder::on(&root)
        .margin(16)
        .x_label_area_size(40)
        .y_label_area_size(56)
        .build_cartesian_2d((w_lo - pad)..(w_hi + pad), 0.0..y_hi)
        .map_err(|e| anyhow!("{e}"))?;
    chart
        .configure_mesh()
        .x_desc("window width w (km)")
        .y_desc("mean OSPA (m)")
        .draw()
        .map_err(|e| anyhow!("{e}"))?;
    chart
        .draw_series(LineSeries::new(rows.iter().map(|r| (r.w_km, r.mean_ospa_m)), &BLUE))
        .map_err(|e| anyhow!("{e}"))?;
    chart
        .draw_series(rows.iter().map(|r| {
            ErrorBar::new_vertical(r.w_km, r.mean_ospa_m - r.ci95_m, r.mean_ospa_m, r.mean_ospa_m + r.ci95_m, BLUE.filled(), 8)
        }))
        .map_err(|e| anyhow!("{e}"))?;
    root.present().map_err(|e| anyhow!("{e}"))?;
    Ok(())
}
