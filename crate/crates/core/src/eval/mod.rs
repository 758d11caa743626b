//! Target extraction from output images and OSPA scoring.

mod extract;
mod ospa;

pub use extract::{estimate_cardinality, extract_targets, weighted_kmeans, EstimateSet};
pub use ospa::{hungarian, ospa, OspaConfig};

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::nn::Model;
use crate::raster::{IntensityImage, RasterizedSimulation};
use crate::scenario::Simulation;
use crate::train::mean_and_stderr;

/// Anything that maps an observation history to an intensity image.
pub trait Predictor {
    fn predict(&self, input: &IntensityImage) -> Result<IntensityImage>;
}

impl Predictor for Model<f32> {
    fn predict(&self, input: &IntensityImage) -> Result<IntensityImage> {
        self.forward(input)
    }
}

/// A network input and the true positions inside the rendering window.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingFrame {
    pub sim_index: u32,
    pub step: u32,
    pub input: IntensityImage,
    pub truth: Vec<Vec2>,
}

/// One frame per step of `sim`, truth restricted to the rendered window.
pub fn tracking_frames(sim: &Simulation, raster: &RasterizedSimulation, history_length: usize) -> Result<Vec<TrackingFrame>> {
    if sim.frames.len() != raster.observations.len() {
        return Err(Error::Dataset("simulation and raster frame counts differ".into()));
    }
    let Some(first) = raster.observations.first() else {
        return Ok(Vec::new());
    };
    let width = first.grid.extent();
    (0..sim.frames.len())
        .map(|t| {
            Ok(TrackingFrame {
                sim_index: sim.sim_index,
                step: t as u32,
                input: raster.history(t, history_length)?,
                truth: sim.frames[t].truth.positions_in_window(width),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameScore {
    pub sim_index: u32,
    pub step: u32,
    pub truth_count: usize,
    pub estimate_count: usize,
    pub ospa: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackingSummary {
    pub window_km: f64,
    pub num_sims: usize,
    pub num_frames: usize,
    /// Mean over simulations of the per-simulation mean OSPA.
    pub mean_ospa: f64,
    /// Half-width of the normal 95% interval over simulations.
    pub ci95: f64,
}

/// Cardinality, extraction and OSPA for one predicted image.
pub fn score_prediction(
    output: &IntensityImage,
    truth: &[Vec2],
    config: &OspaConfig,
    seed: u64,
) -> (EstimateSet, f64) {
    let k = estimate_cardinality(output);
    let est = extract_targets(output, k, seed);
    let d = ospa(truth, &est.positions, config);
    (est, d)
}

pub fn score_frame(
    predictor: &dyn Predictor,
    frame: &TrackingFrame,
    config: &OspaConfig,
    seed: u64,
) -> Result<FrameScore> {
    let output = predictor.predict(&frame.input)?;
    let (est, d) = score_prediction(&output, &frame.truth, config, seed);
    Ok(FrameScore {
        sim_index: frame.sim_index,
        step: frame.step,
        truth_count: frame.truth.len(),
        estimate_count: est.positions.len(),
        ospa: d,
    })
}

/// Groups scores by simulation in order of first appearance.
pub fn summarize(scores: &[FrameScore], window_km: f64) -> TrackingSummary {
    let mut sims: Vec<(u32, f64, usize)> = Vec::new();
    for s in scores {
        match sims.iter_mut().find(|(id, _, _)| *id == s.sim_index) {
            Some(entry) => {
                entry.1 += s.ospa;
                entry.2 += 1;
            }
            None => sims.push((s.sim_index, s.ospa, 1)),
        }
    }
    let means: Vec<f64> = sims.iter().map(|&(_, sum, n)| sum / n as f64).collect();
    let (mean, stderr) = mean_and_stderr(&means);
    TrackingSummary {
        window_km,
        num_sims: means.len(),
        num_frames: scores.len(),
        mean_ospa: mean,
        ci95: 1.96 * stderr,
    }
}

/// Scores every frame sequentially. Callers wanting parallelism can map
/// [`score_frame`] themselves and pass the results to [`summarize`].
pub fn evaluate_tracking(
    predictor: &dyn Predictor,
    frames: &[TrackingFrame],
    config: &OspaConfig,
    seed: u64,
) -> Result<(Vec<FrameScore>, TrackingSummary)> {
    config.validate()?;
    let scores = frames
        .iter()
        .map(|f| score_frame(predictor, f, config, seed))
        .collect::<Result<Vec<_>>>()?;
    let window_km = frames.first().map(|f| f.input.grid.extent() / 1000.0).unwrap_or(0.0);
    Ok((scores.clone(), summarize(&scores, window_km)))
}
