//! Multi-sensor, multi-target scenario simulation.
//!
//! Targets follow the discretized white-noise-acceleration (nearly constant
//! velocity) model, die independently, and are born as a Poisson process.
//! Static sensors observe targets in range-bearing form with additive Gaussian
//! noise, miss detections, and report Poisson clutter uniform over their
//! detection disk.
//!
//! Units: window widths and sensor range are configured in kilometers; all
//! positions, ranges and noise levels are in meters and seconds.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Vec2};
use crate::rng::{self, Purpose, NO_STEP};

/// Position and velocity of one target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetState {
    pub id: u64,
    pub position: Vec2,
    pub velocity: Vec2,
}

/// The set of live targets at one time step.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MultiTargetState {
    pub targets: Vec<TargetState>,
    pub time_step: u32,
    /// Next unused target id.
    pub next_id: u64,
}

impl MultiTargetState {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn positions(&self) -> impl Iterator<Item = Vec2> + '_ {
        self.targets.iter().map(|t| t.position)
    }

    /// Positions of targets inside the open, origin-centered square of side `width_m`.
    pub fn positions_in_window(&self, width_m: f64) -> Vec<Vec2> {
        self.positions()
            .filter(|p| p.in_centered_square(width_m))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sensor {
    pub id: u32,
    pub position: Vec2,
}

/// One range-bearing report. `is_clutter` is ground-truth bookkeeping and is
/// never rasterized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub range: f64,
    pub bearing: f64,
    pub sensor_id: u32,
    pub is_clutter: bool,
}

impl Measurement {
    /// The measured point in world coordinates.
    pub fn position(&self, sensor: &Sensor) -> Vec2 {
        sensor.position + Vec2::from_polar(self.range, self.bearing)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSet {
    pub measurements: Vec<Measurement>,
    pub time_step: u32,
}

impl MeasurementSet {
    pub fn len(&self) -> usize {
        self.measurements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measurements.is_empty()
    }

    pub fn validate(&self, sensors: &[Sensor]) -> Result<()> {
        for m in &self.measurements {
            if find_sensor(sensors, m.sensor_id).is_none() {
                return Err(Error::UnknownSensor(m.sensor_id));
            }
        }
        Ok(())
    }
}

pub(crate) fn find_sensor(sensors: &[Sensor], id: u32) -> Option<&Sensor> {
    sensors.iter().find(|s| s.id == id)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    /// Rendering window width w, km.
    pub window_width_km: f64,
    /// Maximum sensor detection range R, km.
    pub sensor_range_km: f64,
    /// Initial targets per km² of the simulation region.
    pub target_density: f64,
    /// Sensors per km² of the simulation region.
    pub sensor_density: f64,
    pub p_death: f64,
    /// Expected newborn targets per step.
    pub birth_rate: f64,
    /// Seconds.
    pub time_step: f64,
    /// Acceleration noise std, m/s².
    pub accel_std: f64,
    /// Per-component std of initial and newborn velocities, m/s.
    pub init_speed_std: f64,
    pub p_detect: f64,
    /// Meters.
    pub range_noise_std: f64,
    /// Radians.
    pub bearing_noise_std: f64,
    /// Clutter events per sensor per second.
    pub clutter_rate: f64,
    pub seed: u64,
}

impl ScenarioConfig {
    /// Defaults for a rendering window of `window_width_km`.
    pub fn new(window_width_km: f64) -> Self {
        ScenarioConfig {
            window_width_km,
            sensor_range_km: 2.0,
            target_density: 10.0,
            sensor_density: 0.25,
            p_death: 0.05,
            birth_rate: 0.5 * window_width_km * window_width_km,
            time_step: 1.0,
            accel_std: 1.0,
            init_speed_std: 5.0,
            p_detect: 0.95,
            range_noise_std: 10.0,
            bearing_noise_std: 0.035,
            clutter_rate: 40.0,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Simulation region width W = w + 2R, km.
    pub fn sim_width_km(&self) -> f64 {
        self.window_width_km + 2.0 * self.sensor_range_km
    }

    pub fn sim_width_m(&self) -> f64 {
        1000.0 * self.sim_width_km()
    }

    pub fn window_width_m(&self) -> f64 {
        1000.0 * self.window_width_km
    }

    pub fn sensor_range_m(&self) -> f64 {
        1000.0 * self.sensor_range_km
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(what.into()));
        let non_neg = [
            self.target_density,
            self.sensor_density,
            self.birth_rate,
            self.accel_std,
            self.init_speed_std,
            self.range_noise_std,
            self.bearing_noise_std,
            self.clutter_rate,
        ];
        if !(self.window_width_km > 0.0 && self.window_width_km.is_finite()) {
            return bad("window width must be positive");
        }
        if !(self.sensor_range_km >= 0.0 && self.sensor_range_km.is_finite()) {
            return bad("sensor range must be non-negative");
        }
        if non_neg.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return bad("densities, rates and noise levels must be finite and non-negative");
        }
        if !(0.0..=1.0).contains(&self.p_death) || !(0.0..=1.0).contains(&self.p_detect) {
            return bad("probabilities must lie in [0, 1]");
        }
        if !(self.time_step > 0.0 && self.time_step.is_finite()) {
            return bad("time step must be positive");
        }
        Ok(())
    }
}

fn poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    let n: f64 = Poisson::new(mean).expect("finite positive mean").sample(rng);
    n as usize
}

fn gauss<R: Rng + ?Sized>(rng: &mut R, std: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    std * z
}

fn uniform_in_square<R: Rng + ?Sized>(rng: &mut R, width: f64) -> Vec2 {
    let h = 0.5 * width;
    Vec2::new(rng.random_range(-h..=h), rng.random_range(-h..=h))
}

fn new_target<R: Rng + ?Sized>(rng: &mut R, id: u64, region_m: f64, speed_std: f64) -> TargetState {
    let position = uniform_in_square(rng, region_m);
    let velocity = Vec2::new(gauss(rng, speed_std), gauss(rng, speed_std));
    TargetState {
        id,
        position,
        velocity,
    }
}

/// Draws the initial targets and the static sensors over the W×W region.
pub fn init_scenario<R: Rng + ?Sized>(
    config: &ScenarioConfig,
    rng: &mut R,
) -> (MultiTargetState, Vec<Sensor>) {
    let w_km = config.sim_width_km();
    let area = w_km * w_km;
    let region = config.sim_width_m();

    let n_targets = poisson(rng, config.target_density * area);
    let targets = (0..n_targets as u64)
        .map(|id| new_target(rng, id, region, config.init_speed_std))
        .collect();

    let n_sensors = poisson(rng, config.sensor_density * area);
    let sensors = (0..n_sensors as u32)
        .map(|id| Sensor {
            id,
            position: uniform_in_square(rng, region),
        })
        .collect();

    let state = MultiTargetState {
        targets,
        time_step: 0,
        next_id: n_targets as u64,
    };
    (state, sensors)
}

/// One constant-velocity transition with a given acceleration sample.
pub fn propagate(target: &TargetState, accel: Vec2, dt: f64) -> TargetState {
    TargetState {
        id: target.id,
        position: target.position + target.velocity * dt + accel * (0.5 * dt * dt),
        velocity: target.velocity + accel * dt,
    }
}

/// Advances every target one step. One acceleration sample per target drives
/// both its position and velocity rows.
pub fn step_dynamics<R: Rng + ?Sized>(
    state: &MultiTargetState,
    config: &ScenarioConfig,
    rng: &mut R,
) -> MultiTargetState {
    let targets = state
        .targets
        .iter()
        .map(|t| {
            let accel = Vec2::new(gauss(rng, config.accel_std), gauss(rng, config.accel_std));
            propagate(t, accel, config.time_step)
        })
        .collect();
    MultiTargetState {
        targets,
        time_step: state.time_step + 1,
        next_id: state.next_id,
    }
}

/// Independent deaths, then Poisson births uniform over the rendering window.
pub fn apply_birth_death<R: Rng + ?Sized>(
    state: &MultiTargetState,
    config: &ScenarioConfig,
    rng: &mut R,
) -> MultiTargetState {
    let mut targets: Vec<TargetState> = state
        .targets
        .iter()
        .filter(|_| rng.random::<f64>() >= config.p_death)
        .copied()
        .collect();
    let mut next_id = state.next_id;
    let births = poisson(rng, config.birth_rate);
    let region = config.window_width_m();
    for _ in 0..births {
        targets.push(new_target(rng, next_id, region, config.init_speed_std));
        next_id += 1;
    }
    MultiTargetState {
        targets,
        time_step: state.time_step,
        next_id,
    }
}

/// Noise-free range and bearing of `point` seen from `from`. A coincident
/// point has bearing 0.
pub fn range_bearing(from: Vec2, point: Vec2) -> (f64, f64) {
    let d = point - from;
    let range = d.norm();
    let bearing = if range == 0.0 {
        0.0
    } else {
        wrap_angle(libm::atan2(d.y, d.x))
    };
    (range, bearing)
}

/// Range-bearing detections of in-range targets plus per-sensor clutter.
pub fn sense<R: Rng + ?Sized>(
    state: &MultiTargetState,
    sensors: &[Sensor],
    config: &ScenarioConfig,
    rng: &mut R,
) -> MeasurementSet {
    let max_range = config.sensor_range_m();
    let mut measurements = Vec::new();
    for sensor in sensors {
        for target in &state.targets {
            let (range, bearing) = range_bearing(sensor.position, target.position);
            if range > max_range {
                continue;
            }
            if rng.random::<f64>() >= config.p_detect {
                continue;
            }
            let noisy_range = (range + gauss(rng, config.range_noise_std)).max(0.0);
            let noisy_bearing = wrap_angle(bearing + gauss(rng, config.bearing_noise_std));
            measurements.push(Measurement {
                range: noisy_range,
                bearing: noisy_bearing,
                sensor_id: sensor.id,
                is_clutter: false,
            });
        }
        let n_clutter = poisson(rng, config.clutter_rate * config.time_step);
        for _ in 0..n_clutter {
            // Uniform on the detection disk, drawn in Cartesian form.
            let offset = loop {
                let p = uniform_in_square(rng, 2.0 * max_range);
                if p.norm_sq() <= max_range * max_range {
                    break p;
                }
            };
            let (range, bearing) = range_bearing(Vec2::ZERO, offset);
            measurements.push(Measurement {
                range,
                bearing,
                sensor_id: sensor.id,
                is_clutter: true,
            });
        }
    }
    MeasurementSet {
        measurements,
        time_step: state.time_step,
    }
}

/// Ground truth and measurements at one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub truth: MultiTargetState,
    pub measurements: MeasurementSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Simulation {
    pub sim_index: u32,
    pub sensors: Vec<Sensor>,
    pub frames: Vec<Frame>,
}

/// Runs simulation number `sim_index` of the seed family `config.seed`.
///
/// Each step applies dynamics, deaths and births, then sensing. Every
/// (simulation, step, purpose) triple draws from its own stream, so the
/// output depends only on `(config, sim_index, num_steps)`.
pub fn run_simulation(config: &ScenarioConfig, sim_index: u32, num_steps: usize) -> Result<Simulation> {
    config.validate()?;
    if num_steps == 0 {
        return Err(Error::InvalidConfig("num_steps must be at least 1".into()));
    }
    if num_steps as u64 >= NO_STEP as u64 {
        return Err(Error::InvalidConfig("num_steps too large".into()));
    }
    let seed = config.seed;
    let (mut state, sensors) = init_scenario(config, &mut rng::stream(seed, sim_index, NO_STEP, Purpose::Init));
    let mut frames = Vec::with_capacity(num_steps);
    for step in 1..=num_steps as u32 {
        state = step_dynamics(&state, config, &mut rng::stream(seed, sim_index, step, Purpose::Dynamics));
        state = apply_birth_death(&state, config, &mut rng::stream(seed, sim_index, step, Purpose::BirthDeath));
        let measurements = sense(&state, &sensors, config, &mut rng::stream(seed, sim_index, step, Purpose::Sensing));
        frames.push(Frame {
            truth: state.clone(),
            measurements,
        });
    }
    Ok(Simulation {
        sim_index,
        sensors,
        frames,
    })
}
