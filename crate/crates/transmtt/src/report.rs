//! CSV outputs and run manifests. Distances are meters, times seconds,
//! losses in (1/m²)².

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::Result;
use serde::{Deserialize, Serialize};
use transmtt_core::eval::{FrameScore, TrackingSummary};
use transmtt_core::train::LossReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub epoch: usize,
    pub mean_loss: f64,
    pub stderr: f64,
    pub wall_time_s: f64,
}

impl MetricsRow {
    pub fn new(epoch: usize, report: &LossReport, wall_time_s: f64) -> Self {
        MetricsRow {
            epoch,
            mean_loss: report.mean_loss,
            stderr: report.std_error,
            wall_time_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRow {
    pub sim_id: u32,
    pub step: u32,
    pub truth_count: usize,
    pub estimate_count: usize,
    pub ospa_m: f64,
}

impl From<&FrameScore> for FrameRow {
    fn from(s: &FrameScore) -> Self {
        FrameRow {
            sim_id: s.sim_index,
            step: s.step,
            truth_count: s.truth_count,
            estimate_count: s.estimate_count,
            ospa_m: s.ospa,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub w_km: f64,
    pub num_sims: usize,
    pub num_frames: usize,
    pub mean_ospa_m: f64,
    pub ci95_m: f64,
}

impl From<&TrackingSummary> for SummaryRow {
    fn from(s: &TrackingSummary) -> Self {
        SummaryRow {
            w_km: s.window_km,
            num_sims: s.num_sims,
            num_frames: s.num_frames,
            mean_ospa_m: s.mean_ospa,
            ci95_m: s.ci95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub w_km: f64,
    pub mean_ospa_m: f64,
    pub ci95_m: f64,
    pub loss_window: f64,
    pub loss_large: f64,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "H")]
    pub h: f64,
    pub holds: bool,
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

/// Everything needed to rerun a command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub code_version: String,
    pub configs: BTreeMap<String, serde_json::Value>,
    pub seeds: BTreeMap<String, u64>,
    /// Dataset manifest hash and chunk hashes, when a dataset was read.
    pub dataset_hashes: BTreeMap<String, String>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        RunManifest {
            command: command.into(),
            code_version: crate::CODE_VERSION.into(),
            configs: BTreeMap::new(),
            seeds: BTreeMap::new(),
            dataset_hashes: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn config<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.configs.insert(name.into(), serde_json::to_value(value)?);
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::write(dir.join("run_manifest.json"), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}
