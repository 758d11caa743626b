//! TOML configuration files.
//!
//! Every key except the window width has a default, so a minimal scenario
//! file is
//!
//! ```toml
//! [scenario]
//! window_width_km = 1.0
//! ```

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use transmtt_core::nn::ModelSpec;
use transmtt_core::raster::{GridSpec, PulseConfig, DEFAULT_PIXELS_PER_KM};
use transmtt_core::scenario::ScenarioConfig;
use transmtt_core::train::{TrainConfig, WindowSpec};

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Scenario overrides. Births are given per km² of rendering window so the
/// same section works at every width.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub window_width_km: Option<f64>,
    pub sensor_range_km: Option<f64>,
    pub target_density: Option<f64>,
    pub sensor_density: Option<f64>,
    pub p_death: Option<f64>,
    pub birth_density: Option<f64>,
    pub time_step: Option<f64>,
    pub accel_std: Option<f64>,
    pub init_speed_std: Option<f64>,
    pub p_detect: Option<f64>,
    pub range_noise_std: Option<f64>,
    pub bearing_noise_std: Option<f64>,
    pub clutter_rate: Option<f64>,
    pub seed: Option<u64>,
}

impl ScenarioSection {
    /// Scenario at `width_km`, or at the configured width when `None`.
    pub fn build(&self, width_km: Option<f64>) -> Result<ScenarioConfig> {
        let Some(w) = width_km.or(self.window_width_km) else {
            bail!("scenario.window_width_km is required");
        };
        let mut c = ScenarioConfig::new(w);
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut c.sensor_range_km, self.sensor_range_km);
        set(&mut c.target_density, self.target_density);
        set(&mut c.sensor_density, self.sensor_density);
        set(&mut c.p_death, self.p_death);
        if let Some(b) = self.birth_density {
            c.birth_rate = b * w * w;
        }
        set(&mut c.time_step, self.time_step);
        set(&mut c.accel_std, self.accel_std);
        set(&mut c.init_speed_std, self.init_speed_std);
        set(&mut c.p_detect, self.p_detect);
        set(&mut c.range_noise_std, self.range_noise_std);
        set(&mut c.bearing_noise_std, self.bearing_noise_std);
        set(&mut c.clutter_rate, self.clutter_rate);
        if let Some(s) = self.seed {
            c.seed = s;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub pixels_per_km: usize,
    pub history_length: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            pixels_per_km: DEFAULT_PIXELS_PER_KM,
            history_length: 4,
        }
    }
}

impl GridSection {
    pub fn grid(&self, width_km: f64) -> Result<GridSpec> {
        Ok(GridSpec::for_window(width_km, self.pixels_per_km)?)
    }
}

/// Scenario file used by `generate`, `eval` and `bound`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub grid: GridSection,
}

/// Encoder-decoder topology. Defaults are the full-size network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub encoder_channels: usize,
    pub hidden_channels: usize,
    pub depth: usize,
    pub hidden_layers: usize,
    pub kernel_size: usize,
    /// Must match the dataset when given.
    pub history_length: Option<usize>,
    /// Defaults to the reciprocal of the target pulse peak.
    pub intensity_scale: Option<f64>,
    pub seed: u64,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            encoder_channels: 128,
            hidden_channels: 1024,
            depth: 3,
            hidden_layers: 4,
            kernel_size: 9,
            history_length: None,
            intensity_scale: None,
            seed: 0,
        }
    }
}

impl ModelSection {
    pub fn spec(&self, history_length: usize, grid: &GridSpec) -> Result<ModelSpec> {
        if let Some(k) = self.history_length {
            if k != history_length {
                bail!("model.history_length = {k} but the dataset stacks {history_length} frames");
            }
        }
        let scale = self
            .intensity_scale
            .unwrap_or_else(|| 1.0 / PulseConfig::for_grid(grid).peak());
        let spec = ModelSpec::encoder_decoder(
            history_length,
            self.encoder_channels,
            self.hidden_channels,
            self.depth,
            self.hidden_layers,
            self.kernel_size,
            scale,
        );
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowMode {
    /// A = B = the dataset window.
    #[default]
    Full,
    /// A = the dataset window, B shrunk by the receptive margin.
    PaddingFree,
    /// Explicit `input_width_m` and `output_width_m`.
    Explicit,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowSection {
    pub mode: WindowMode,
    pub input_width_m: Option<f64>,
    pub output_width_m: Option<f64>,
}

impl WindowSection {
    pub fn resolve(&self, grid: &GridSpec, spec: &ModelSpec) -> Result<WindowSpec> {
        let extent = grid.extent();
        Ok(match self.mode {
            WindowMode::Full => WindowSpec::full(extent),
            WindowMode::PaddingFree => WindowSpec::padding_free(extent, spec, grid.resolution)?,
            WindowMode::Explicit => {
                let (Some(a), Some(b)) = (self.input_width_m, self.output_width_m) else {
                    bail!("explicit window needs input_width_m and output_width_m");
                };
                WindowSpec::new(a, b)?
            }
        })
    }
}

/// Training file used by `train`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainFile {
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub window: WindowSection,
}

/// Transfer sweep plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepPlan {
    pub train_width_km: f64,
    pub widths_km: Vec<f64>,
    pub sims: u32,
    pub steps: usize,
    pub seed: u64,
    /// Simulations and steps for each side of the bound check.
    pub bound_sims: u32,
    pub bound_steps: usize,
    pub scenario: ScenarioSection,
}

impl Default for SweepPlan {
    fn default() -> Self {
        SweepPlan {
            train_width_km: 1.0,
            widths_km: vec![1.0, 2.0, 3.0],
            sims: 100,
            steps: 100,
            seed: 1_000_000,
            bound_sims: 10,
            bound_steps: 20,
            scenario: ScenarioSection::default(),
        }
    }
}

impl SweepPlan {
    pub fn validate(&self) -> Result<()> {
        if self.widths_km.is_empty() {
            bail!("sweep plan has no widths");
        }
        if let Some(w) = self.widths_km.iter().find(|&&w| w < self.train_width_km) {
            bail!("eval width {w} km is below the training width {} km", self.train_width_km);
        }
        if self.sims == 0 || self.steps == 0 || self.bound_sims == 0 || self.bound_steps == 0 {
            bail!("sims and steps must be positive");
        }
        Ok(())
    }

    /// Widths in ascending order without duplicates.
    pub fn sorted_widths(&self) -> Vec<f64> {
        let mut w = self.widths_km.clone();
        w.sort_by(f64::total_cmp);
        w.dedup();
        w
    }
}
