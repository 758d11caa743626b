//! Model checkpoint container.
//!
//! Layout: 8-byte magic, u32 LE version, u32 LE header length, a JSON header
//! (spec, seed, training window), then every parameter as f32 LE in layer
//! order, weights before biases.

use std::fs;
use std::path::Path;

use anyhow::{ensure, Context, Result};
use serde::{Deserialize, Serialize};
use transmtt_core::nn::{build_model, Model, ModelSpec};
use transmtt_core::train::WindowSpec;

use crate::dataset::FormatError;

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"TMTTCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub spec: ModelSpec,
    pub seed: u64,
    pub dtype: String,
    pub num_parameters: usize,
    pub pixels_per_km: usize,
    /// Width of the training rasters, meters.
    pub train_width_m: f64,
    pub train_window: WindowSpec,
    pub code_version: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub model: Model<f32>,
}

impl Checkpoint {
    pub fn new(model: Model<f32>, seed: u64, pixels_per_km: usize, train_width_m: f64, train_window: WindowSpec) -> Self {
        Checkpoint {
            header: CheckpointHeader {
                spec: model.spec.clone(),
                seed,
                dtype: "f32".into(),
                num_parameters: model.num_parameters(),
                pixels_per_km,
                train_width_m,
                train_window,
                code_version: crate::CODE_VERSION.into(),
            },
            model,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header)?;
        let mut out = Vec::with_capacity(16 + header.len() + 4 * self.header.num_parameters);
        out.extend_from_slice(&CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for p in self.model.parameters() {
            out.extend_from_slice(&p.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        ensure!(bytes.len() >= 16, FormatError::Length { expected: 16, found: bytes.len() });
        ensure!(bytes[..8] == CHECKPOINT_MAGIC, FormatError::Magic);
        let version = u32::from_le_bytes(bytes[8..12].try_into()?);
        ensure!(version == CHECKPOINT_VERSION, FormatError::Version(version));
        let hlen = u32::from_le_bytes(bytes[12..16].try_into()?) as usize;
        ensure!(bytes.len() >= 16 + hlen, FormatError::Length { expected: 16 + hlen, found: bytes.len() });
        let header: CheckpointHeader = serde_json::from_slice(&bytes[16..16 + hlen])?;
        ensure!(header.dtype == "f32", "unsupported checkpoint dtype {}", header.dtype);
        let mut model = build_model::<f32>(&header.spec, header.seed)?;
        let payload = &bytes[16 + hlen..];
        let expected = 4 * model.num_parameters();
        ensure!(
            header.num_parameters == model.num_parameters() && payload.len() == expected,
            FormatError::Length { expected, found: payload.len() }
        );
        let mut values = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")));
        for layer in &mut model.layers {
            for p in layer.weight.iter_mut().chain(layer.bias.iter_mut()) {
                *p = values.next().expect("length checked");
            }
        }
        Ok(Checkpoint { header, model })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_bytes()?).with_context(|| format!("writing {}", tmp.display()))?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_bytes(&bytes).with_context(|| format!("decoding {}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let spec = ModelSpec::encoder_decoder(2, 3, 4, 1, 1, 3, 10.0);
        let mut model = build_model::<f32>(&spec, 5).unwrap();
        model.layers[0].bias[1] = -0.25;
        Checkpoint::new(model, 5, 128, 1000.0, WindowSpec::full(1000.0))
    }

    #[test]
    fn round_trip_restores_parameters() {
        let c = sample();
        let back = Checkpoint::from_bytes(&c.to_bytes().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn corrupt_input_rejected() {
        let bytes = sample().to_bytes().unwrap();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[8] = 9;
        assert!(Checkpoint::from_bytes(&bad).is_err());
        assert!(Checkpoint::from_bytes(b"TMTT").is_err());
    }
}
