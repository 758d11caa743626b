//! Intensity images.
//!
//! Target sets become a superposition of unit-mass Gaussian pulses; measurement
//! sets become a superposition of range-bearing likelihoods expressed as
//! densities over position. Both are sampled at pixel centers of a square grid.
//! Values are in 1/m², so `mass` (sum × ρ²) counts targets or measurements.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Vec2};
use crate::scenario::{find_sensor, MeasurementSet, MultiTargetState, ScenarioConfig, Sensor, Simulation};

/// Square pixel grid. Pixel (i, j) has its center at `origin + ρ·(i, j)`;
/// `i` runs along x, `j` along y.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// ρ, meters per pixel.
    pub resolution: f64,
    pub width_pixels: usize,
    pub origin: Vec2,
}

/// 128 pixels per km.
pub const DEFAULT_PIXELS_PER_KM: usize = 128;

impl GridSpec {
    /// An N×N grid whose pixel centers are symmetric about the world origin.
    pub fn centered(width_pixels: usize, resolution: f64) -> Self {
        let half = 0.5 * (width_pixels as f64 - 1.0) * resolution;
        GridSpec {
            resolution,
            width_pixels,
            origin: Vec2::new(-half, -half),
        }
    }

    /// Centered grid covering a `width_km` window at `pixels_per_km`.
    pub fn for_window(width_km: f64, pixels_per_km: usize) -> Result<Self> {
        let n = width_km * pixels_per_km as f64;
        let rounded = libm::round(n);
        if rounded < 1.0 || (n - rounded).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "window {width_km} km is not a whole number of pixels at {pixels_per_km} px/km"
            )));
        }
        Ok(Self::centered(rounded as usize, 1000.0 / pixels_per_km as f64))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.resolution > 0.0 && self.resolution.is_finite()) || self.width_pixels == 0 || !self.origin.is_finite() {
            return Err(Error::InvalidConfig("grid needs ρ > 0 and N ≥ 1".into()));
        }
        Ok(())
    }

    pub fn center(&self, i: usize, j: usize) -> Vec2 {
        Vec2::new(
            self.origin.x + self.resolution * i as f64,
            self.origin.y + self.resolution * j as f64,
        )
    }

    /// Side length covered by the pixels, N·ρ.
    pub fn extent(&self) -> f64 {
        self.width_pixels as f64 * self.resolution
    }

    pub fn pixel_count(&self) -> usize {
        self.width_pixels * self.width_pixels
    }

    pub fn pixel_area(&self) -> f64 {
        self.resolution * self.resolution
    }

    /// Inclusive pixel index range whose centers lie within `[lo, hi]` along one axis.
    fn index_range(&self, origin: f64, lo: f64, hi: f64) -> Option<(usize, usize)> {
        let n = self.width_pixels as f64;
        let a = libm::ceil((lo - origin) / self.resolution).max(0.0);
        let b = libm::floor((hi - origin) / self.resolution).min(n - 1.0);
        if a > b {
            None
        } else {
            Some((a as usize, b as usize))
        }
    }

    /// Pixel index box covering the axis-aligned square of half-side `r` around `p`.
    pub(crate) fn box_around(&self, p: Vec2, r: f64) -> Option<((usize, usize), (usize, usize))> {
        let xs = self.index_range(self.origin.x, p.x - r, p.x + r)?;
        let ys = self.index_range(self.origin.y, p.y - r, p.y + r)?;
        Some((xs, ys))
    }
}

/// A C×N×N image of non-negative intensities (1/m²), stored `[c][i][j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityImage {
    pub grid: GridSpec,
    pub channels: usize,
    pub values: Vec<f32>,
}

impl IntensityImage {
    pub fn zeros(grid: GridSpec, channels: usize) -> Self {
        IntensityImage {
            grid,
            channels,
            values: vec![0.0; channels * grid.pixel_count()],
        }
    }

    pub fn from_values(grid: GridSpec, channels: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != channels * grid.pixel_count() {
            return Err(Error::GridMismatch(format!(
                "{} values for {} channels of {}×{}",
                values.len(),
                channels,
                grid.width_pixels,
                grid.width_pixels
            )));
        }
        Ok(IntensityImage { grid, channels, values })
    }

    pub fn width(&self) -> usize {
        self.grid.width_pixels
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.grid.pixel_count();
        &self.values[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.grid.pixel_count();
        &mut self.values[c * n..(c + 1) * n]
    }

    pub fn get(&self, c: usize, i: usize, j: usize) -> f32 {
        let n = self.width();
        self.values[(c * n + i) * n + j]
    }

    /// Σ values × ρ² over one channel.
    pub fn mass(&self, c: usize) -> f64 {
        self.channel(c).iter().map(|&v| v as f64).sum::<f64>() * self.grid.pixel_area()
    }

    /// Copies channel `c` into a single-channel image.
    pub fn single_channel(&self, c: usize) -> IntensityImage {
        IntensityImage {
            grid: self.grid,
            channels: 1,
            values: self.channel(c).to_vec(),
        }
    }
}

/// Gaussian pulse used for target intensities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseConfig {
    /// σ, meters.
    pub sigma: f64,
    /// Pulses are evaluated only within this distance of the target, meters.
    pub truncation_radius: f64,
}

impl PulseConfig {
    pub fn new(sigma: f64) -> Self {
        PulseConfig {
            sigma,
            truncation_radius: 5.0 * sigma,
        }
    }

    /// σ = 2ρ, truncated at 5σ.
    pub fn for_grid(grid: &GridSpec) -> Self {
        Self::new(2.0 * grid.resolution)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) || !(self.truncation_radius >= 4.0 * self.sigma) {
            return Err(Error::InvalidConfig("pulse needs σ > 0 and truncation ≥ 4σ".into()));
        }
        Ok(())
    }

    /// Peak value of one pulse, (2πσ²)^-1.
    pub fn peak(&self) -> f64 {
        1.0 / (2.0 * PI * self.sigma * self.sigma)
    }
}

/// Target intensity sampled at pixel centers.
pub fn target_intensity(state: &MultiTargetState, grid: &GridSpec, pulse: &PulseConfig) -> IntensityImage {
    let mut image = IntensityImage::zeros(*grid, 1);
    let n = grid.width_pixels;
    let norm = pulse.peak();
    let inv_two_var = 1.0 / (2.0 * pulse.sigma * pulse.sigma);
    let r2_max = pulse.truncation_radius * pulse.truncation_radius;
    for p in state.positions() {
        let Some(((i0, i1), (j0, j1))) = grid.box_around(p, pulse.truncation_radius) else {
            continue;
        };
        for i in i0..=i1 {
            let dx = grid.origin.x + grid.resolution * i as f64 - p.x;
            for j in j0..=j1 {
                let dy = grid.origin.y + grid.resolution * j as f64 - p.y;
                let d2 = dx * dx + dy * dy;
                if d2 <= r2_max {
                    image.values[i * n + j] += (norm * libm::exp(-d2 * inv_two_var)) as f32;
                }
            }
        }
    }
    image
}

/// Range-bearing likelihood parameters for observation images.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Likelihood {
    range_std: f64,
    bearing_std: f64,
    /// Truncation in standard deviations along both axes.
    cutoff: f64,
}

const LIKELIHOOD_CUTOFF: f64 = 5.0;

/// Observation intensity: Σ_z g(z | p) at every pixel center p, where g is
/// the Gaussian range-bearing likelihood divided by the range (the polar
/// Jacobian), so each measurement integrates to ≈ 1 over position.
pub fn measurement_intensity(
    measurements: &MeasurementSet,
    sensors: &[Sensor],
    grid: &GridSpec,
    config: &ScenarioConfig,
) -> Result<IntensityImage> {
    if !(config.range_noise_std > 0.0 && config.bearing_noise_std > 0.0) {
        return Err(Error::InvalidConfig(
            "observation images need positive range and bearing noise".into(),
        ));
    }
    let lik = Likelihood {
        range_std: config.range_noise_std,
        bearing_std: config.bearing_noise_std,
        cutoff: LIKELIHOOD_CUTOFF,
    };
    let mut image = IntensityImage::zeros(*grid, 1);
    for m in &measurements.measurements {
        let sensor = find_sensor(sensors, m.sensor_id).ok_or(Error::UnknownSensor(m.sensor_id))?;
        splat_likelihood(&mut image, sensor.position, m.range, m.bearing, &lik);
    }
    Ok(image)
}

fn splat_likelihood(image: &mut IntensityImage, sensor: Vec2, range: f64, bearing: f64, lik: &Likelihood) {
    let grid = image.grid;
    let n = grid.width_pixels;
    let dr = lik.cutoff * lik.range_std;
    let dtheta = lik.cutoff * lik.bearing_std;
    let r_hi = range + dr;
    let r_lo = (range - dr).max(0.0);
    // The sector lies within arc-length distance dr + r_hi·dθ of the measured point.
    let center = sensor + Vec2::from_polar(range, bearing);
    let reach = (dr + r_hi * dtheta).min(range + r_hi);
    let Some(((i0, i1), (j0, j1))) = grid.box_around(center, reach) else {
        return;
    };
    let norm = 1.0 / (2.0 * PI * lik.range_std * lik.bearing_std);
    let (r2_lo, r2_hi) = (r_lo * r_lo, r_hi * r_hi);
    for i in i0..=i1 {
        let dx = grid.origin.x + grid.resolution * i as f64 - sensor.x;
        for j in j0..=j1 {
            let dy = grid.origin.y + grid.resolution * j as f64 - sensor.y;
            let r2 = dx * dx + dy * dy;
            if r2 < r2_lo || r2 > r2_hi || r2 == 0.0 {
                continue;
            }
            let db = wrap_angle(libm::atan2(dy, dx) - bearing);
            if db.abs() > dtheta {
                continue;
            }
            let r = libm::sqrt(r2);
            let zr = (r - range) / lik.range_std;
            let zb = db / lik.bearing_std;
            image.values[i * n + j] += (norm * libm::exp(-0.5 * (zr * zr + zb * zb)) / r) as f32;
        }
    }
}

/// Stacks single-channel frames into a K-channel image, channel 0 oldest.
/// The newest frame is the last element; when fewer than K frames are given,
/// the leading channels are zero.
pub fn stack_history(images: &[IntensityImage], history_length: usize) -> Result<IntensityImage> {
    let last = images
        .last()
        .ok_or_else(|| Error::InvalidConfig("stack_history needs at least one frame".into()))?;
    if history_length == 0 {
        return Err(Error::InvalidConfig("history length must be at least 1".into()));
    }
    let grid = last.grid;
    let npx = grid.pixel_count();
    let mut out = IntensityImage::zeros(grid, history_length);
    let used = images.len().min(history_length);
    let first_channel = history_length - used;
    for (k, img) in images[images.len() - used..].iter().enumerate() {
        if img.grid != grid || img.channels != 1 {
            return Err(Error::GridMismatch("history frames must share one single-channel grid".into()));
        }
        let c = first_channel + k;
        out.values[c * npx..(c + 1) * npx].copy_from_slice(&img.values);
    }
    Ok(out)
}

/// Zeroes every pixel whose center lies outside the open, origin-centered
/// square of side `width` (the ⊓ operator). All channels are windowed.
pub fn window(image: &IntensityImage, width: f64) -> IntensityImage {
    let mut out = image.clone();
    window_in_place(&mut out, width);
    out
}

pub fn window_in_place(image: &mut IntensityImage, width: f64) {
    let mask = window_mask(&image.grid, width);
    let npx = image.grid.pixel_count();
    for c in 0..image.channels {
        for (v, &keep) in image.values[c * npx..(c + 1) * npx].iter_mut().zip(&mask) {
            if !keep {
                *v = 0.0;
            }
        }
    }
}

/// Per-pixel membership in the open centered square of side `width`.
pub fn window_mask(grid: &GridSpec, width: f64) -> Vec<bool> {
    let n = grid.width_pixels;
    let mut mask = vec![false; n * n];
    for i in 0..n {
        for j in 0..n {
            mask[i * n + j] = grid.center(i, j).in_centered_square(width);
        }
    }
    mask
}

/// Observation and target images for every frame of a simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterizedSimulation {
    pub sim_index: u32,
    pub observations: Vec<IntensityImage>,
    pub targets: Vec<IntensityImage>,
}

pub fn rasterize_simulation(
    sim: &Simulation,
    config: &ScenarioConfig,
    grid: &GridSpec,
    pulse: &PulseConfig,
) -> Result<RasterizedSimulation> {
    grid.validate()?;
    pulse.validate()?;
    let mut observations = Vec::with_capacity(sim.frames.len());
    let mut targets = Vec::with_capacity(sim.frames.len());
    for frame in &sim.frames {
        observations.push(measurement_intensity(&frame.measurements, &sim.sensors, grid, config)?);
        targets.push(target_intensity(&frame.truth, grid, pulse));
    }
    Ok(RasterizedSimulation {
        sim_index: sim.sim_index,
        observations,
        targets,
    })
}

impl RasterizedSimulation {
    /// The K-frame observation history ending at `step` (0-based).
    pub fn history(&self, step: usize, history_length: usize) -> Result<IntensityImage> {
        let start = (step + 1).saturating_sub(history_length);
        stack_history(&self.observations[start..=step], history_length)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{Measurement, TargetState};

    fn grid() -> GridSpec {
        GridSpec::for_window(1.0, DEFAULT_PIXELS_PER_KM).unwrap()
    }

    fn state(points: &[Vec2]) -> MultiTargetState {
        MultiTargetState {
            targets: points
                .iter()
                .enumerate()
                .map(|(k, &p)| TargetState { id: k as u64, position: p, velocity: Vec2::ZERO })
                .collect(),
            time_step: 0,
            next_id: points.len() as u64,
        }
    }

    #[test]
    fn grid_geometry() {
        let g = grid();
        assert_eq!(g.width_pixels, 128);
        assert!((g.resolution - 7.8125).abs() < 1e-15);
        assert!((g.extent() - 1000.0).abs() < 1e-9);
        let c0 = g.center(0, 0);
        let c1 = g.center(127, 127);
        assert!((c0.x + c1.x).abs() < 1e-9 && (c0.y + c1.y).abs() < 1e-9);
        assert!(GridSpec::for_window(1.0 / 3.0, 128).is_err());
        assert_eq!(GridSpec::for_window(3.0, 128).unwrap().width_pixels, 384);
    }

    #[test]
    fn empty_state_gives_zero_image() {
        let img = target_intensity(&state(&[]), &grid(), &PulseConfig::for_grid(&grid()));
        assert!(img.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_pulse_mass_and_peak() {
        let g = grid();
        let pulse = PulseConfig::for_grid(&g);
        let p = g.center(64, 64);
        let img = target_intensity(&state(&[p]), &g, &pulse);
        assert!((img.mass(0) - 1.0).abs() <= 0.02);
        assert!((img.get(0, 64, 64) as f64 - pulse.peak()).abs() < 1e-9);
        let two = target_intensity(&state(&[g.center(30, 30), g.center(90, 80)]), &g, &pulse);
        assert!((two.mass(0) - 2.0).abs() <= 0.04);
    }

    #[test]
    fn off_grid_target_contributes_tail_only() {
        let g = grid();
        let pulse = PulseConfig::for_grid(&g);
        let edge = target_intensity(&state(&[Vec2::new(-500.0 - g.resolution * 0.5, 0.0)]), &g, &pulse);
        assert!(edge.mass(0) > 0.3 && edge.mass(0) < 0.7);
        let far = target_intensity(&state(&[Vec2::new(2000.0, 0.0)]), &g, &pulse);
        assert_eq!(far.mass(0), 0.0);
    }

    #[test]
    fn integer_pixel_shift_translates_image() {
        let g = grid();
        let pulse = PulseConfig::for_grid(&g);
        let base = [Vec2::new(-101.3, 40.2), Vec2::new(55.0, -12.7)];
        let (a, b) = (5usize, 3usize);
        let shifted: Vec<Vec2> = base
            .iter()
            .map(|p| *p + Vec2::new(a as f64, b as f64) * g.resolution)
            .collect();
        let u0 = target_intensity(&state(&base), &g, &pulse);
        let u1 = target_intensity(&state(&shifted), &g, &pulse);
        for i in 0..128 - a {
            for j in 0..128 - b {
                assert!((u0.get(0, i, j) - u1.get(0, i + a, j + b)).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn one_measurement_integrates_to_one() {
        let g = grid();
        let config = ScenarioConfig::new(1.0);
        let sensors = [Sensor { id: 2, position: Vec2::new(-900.0, -300.0) }];
        let z = MeasurementSet {
            measurements: vec![Measurement { range: 1000.0, bearing: 0.3, sensor_id: 2, is_clutter: false }],
            time_step: 0,
        };
        let v = measurement_intensity(&z, &sensors, &g, &config).unwrap();
        assert!((v.mass(0) - 1.0).abs() <= 0.05, "mass {}", v.mass(0));
        assert!(v.values.iter().all(|&x| x >= 0.0 && x.is_finite()));
    }

    #[test]
    fn empty_measurements_and_unknown_sensor() {
        let g = grid();
        let config = ScenarioConfig::new(1.0);
        let v = measurement_intensity(&MeasurementSet::default(), &[], &g, &config).unwrap();
        assert!(v.values.iter().all(|&x| x == 0.0));
        let z = MeasurementSet {
            measurements: vec![Measurement { range: 10.0, bearing: 0.0, sensor_id: 1, is_clutter: true }],
            time_step: 0,
        };
        assert_eq!(measurement_intensity(&z, &[], &g, &config), Err(Error::UnknownSensor(1)));
    }

    #[test]
    fn sensor_pixel_is_zero() {
        let g = grid();
        let config = ScenarioConfig::new(1.0);
        let sensors = [Sensor { id: 0, position: g.center(64, 64) }];
        let z = MeasurementSet {
            measurements: vec![Measurement { range: 3.0, bearing: 0.0, sensor_id: 0, is_clutter: true }],
            time_step: 0,
        };
        let v = measurement_intensity(&z, &sensors, &g, &config).unwrap();
        assert_eq!(v.get(0, 64, 64), 0.0);
        assert!(v.mass(0) > 0.0);
    }

    #[test]
    fn measurement_superposition() {
        let g = grid();
        let config = ScenarioConfig::new(1.0);
        let sensors = [
            Sensor { id: 0, position: Vec2::new(-800.0, 0.0) },
            Sensor { id: 1, position: Vec2::new(300.0, 900.0) },
        ];
        let m0 = Measurement { range: 820.0, bearing: 0.05, sensor_id: 0, is_clutter: false };
        let m1 = Measurement { range: 950.0, bearing: -1.7, sensor_id: 1, is_clutter: false };
        let set = |ms: Vec<Measurement>| MeasurementSet { measurements: ms, time_step: 0 };
        let both = measurement_intensity(&set(vec![m0, m1]), &sensors, &g, &config).unwrap();
        let a = measurement_intensity(&set(vec![m0]), &sensors, &g, &config).unwrap();
        let b = measurement_intensity(&set(vec![m1]), &sensors, &g, &config).unwrap();
        for k in 0..both.values.len() {
            assert!((both.values[k] - (a.values[k] + b.values[k])).abs() <= 1e-6 * both.values[k].abs().max(1e-12));
        }
    }

    #[test]
    fn stack_history_rules() {
        let g = GridSpec::centered(4, 1.0);
        let frame = |v: f32| IntensityImage::from_values(g, 1, vec![v; 16]).unwrap();
        let single = stack_history(&[frame(1.0), frame(2.0)], 1).unwrap();
        assert_eq!(single, frame(2.0));
        let padded = stack_history(&[frame(1.0), frame(2.0)], 3).unwrap();
        assert!(padded.channel(0).iter().all(|&v| v == 0.0));
        assert!(padded.channel(1).iter().all(|&v| v == 1.0));
        assert!(padded.channel(2).iter().all(|&v| v == 2.0));
        let fwd = stack_history(&[frame(1.0), frame(2.0)], 2).unwrap();
        let rev = stack_history(&[frame(2.0), frame(1.0)], 2).unwrap();
        assert_ne!(fwd, rev);
        let other = IntensityImage::zeros(GridSpec::centered(5, 1.0), 1);
        assert!(stack_history(&[other, frame(1.0)], 2).is_err());
    }

    #[test]
    fn window_examples() {
        let g = grid();
        let pulse = PulseConfig::for_grid(&g);
        let img = target_intensity(&state(&[Vec2::new(-300.0, 200.0), Vec2::new(10.0, 5.0)]), &g, &pulse);
        assert_eq!(window(&img, 1000.1), img);
        assert!(window(&img, 1e-9).values.iter().all(|&v| v == 0.0));
        let w = window(&img, 400.0);
        assert!(w.mass(0) <= img.mass(0));
        assert!((w.mass(0) - 1.0).abs() < 0.02);
        assert_eq!(window(&w, 400.0), w);
    }
}
