//! On-disk datasets of (stacked observation history, target image) pairs.
//!
//! Each chunk file holds one little-endian f32 tensor of shape
//! `[frames, K + 1, N, N]`, row-major, behind a 64-byte header: channels
//! `0..K` are the observation history and channel `K` the target. Chunks cover
//! whole simulations, and `manifest.json` lists them with SHA-256 hashes.

use std::fs::{self, File};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use transmtt_core::raster::{rasterize_simulation, GridSpec, IntensityImage, PulseConfig};
use transmtt_core::scenario::{run_simulation, ScenarioConfig};
use transmtt_core::train::{Sample, SampleSource};

use crate::CODE_VERSION;

pub const CHUNK_MAGIC: [u8; 8] = *b"TMTTCHNK";
pub const CHUNK_VERSION: u32 = 1;
pub const DTYPE_F32: u32 = 1;
pub const HEADER_LEN: usize = 64;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_SCHEMA: u32 = 1;
/// Target chunk size in bytes; chunks never split a simulation.
pub const CHUNK_TARGET_BYTES: usize = 64 << 20;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic")]
    Magic,
    #[error("unsupported version {0}")]
    Version(u32),
    #[error("unsupported dtype {0}")]
    Dtype(u32),
    #[error("payload is {found} bytes, shape needs {expected}")]
    Length { expected: usize, found: usize },
    #[error("hash mismatch for {0}")]
    Hash(String),
}

/// Fixed 64-byte chunk header: magic, version, dtype, rank, four u64 dims,
/// zero padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkHeader {
    pub version: u32,
    pub dtype: u32,
    pub shape: [u64; 4],
}

impl ChunkHeader {
    pub fn new(shape: [u64; 4]) -> Self {
        ChunkHeader {
            version: CHUNK_VERSION,
            dtype: DTYPE_F32,
            shape,
        }
    }

    pub fn elements(&self) -> usize {
        self.shape.iter().product::<u64>() as usize
    }

    pub fn encode(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[..8].copy_from_slice(&CHUNK_MAGIC);
        b[8..12].copy_from_slice(&self.version.to_le_bytes());
        b[12..16].copy_from_slice(&self.dtype.to_le_bytes());
        b[16..20].copy_from_slice(&4u32.to_le_bytes());
        for (k, d) in self.shape.iter().enumerate() {
            b[20 + 8 * k..28 + 8 * k].copy_from_slice(&d.to_le_bytes());
        }
        b
    }

    pub fn decode(b: &[u8; HEADER_LEN]) -> Result<Self, FormatError> {
        if b[..8] != CHUNK_MAGIC {
            return Err(FormatError::Magic);
        }
        let u32_at = |o: usize| u32::from_le_bytes(b[o..o + 4].try_into().expect("4 bytes"));
        let version = u32_at(8);
        if version != CHUNK_VERSION {
            return Err(FormatError::Version(version));
        }
        let dtype = u32_at(12);
        if dtype != DTYPE_F32 {
            return Err(FormatError::Dtype(dtype));
        }
        let mut shape = [0u64; 4];
        for (k, d) in shape.iter_mut().enumerate() {
            *d = u64::from_le_bytes(b[20 + 8 * k..28 + 8 * k].try_into().expect("8 bytes"));
        }
        Ok(ChunkHeader { version, dtype, shape })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 20];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

fn encode_chunk(shape: [u64; 4], data: &[f32]) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(HEADER_LEN + 4 * data.len());
    bytes.extend_from_slice(&ChunkHeader::new(shape).encode());
    for v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes
}

/// Writes a chunk atomically (temporary file, then rename) and returns its hash.
pub fn write_chunk(path: &Path, shape: [u64; 4], data: &[f32]) -> Result<String> {
    let expected = shape.iter().product::<u64>() as usize;
    ensure!(data.len() == expected, FormatError::Length { expected, found: data.len() });
    let bytes = encode_chunk(shape, data);
    let tmp = path.with_extension("tmp");
    let mut f = File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
    f.write_all(&bytes)?;
    f.sync_all()?;
    fs::rename(&tmp, path)?;
    Ok(sha256_hex(&bytes))
}

pub fn read_chunk(path: &Path) -> Result<(ChunkHeader, Vec<f32>)> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    ensure!(bytes.len() >= HEADER_LEN, FormatError::Length { expected: HEADER_LEN, found: bytes.len() });
    let header = ChunkHeader::decode(bytes[..HEADER_LEN].try_into().expect("64 bytes"))?;
    let payload = &bytes[HEADER_LEN..];
    ensure!(
        payload.len() == 4 * header.elements(),
        FormatError::Length { expected: 4 * header.elements(), found: payload.len() }
    );
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok((header, data))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkEntry {
    pub file: String,
    pub first_sim: u32,
    pub num_sims: u32,
    pub frames: usize,
    /// Byte offset of the tensor payload in the file.
    pub byte_offset: usize,
    pub shape: [u64; 4],
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub code_version: String,
    pub scenario: ScenarioConfig,
    pub scenario_sha256: String,
    pub grid: GridSpec,
    pub pixels_per_km: usize,
    pub history_length: usize,
    pub num_sims: u32,
    pub steps: usize,
    pub seed: u64,
    pub sims_per_chunk: u32,
    pub chunks: Vec<ChunkEntry>,
    pub complete: bool,
}

impl DatasetManifest {
    pub fn num_frames(&self) -> usize {
        self.chunks.iter().map(|c| c.frames).sum()
    }

    pub fn frame_elements(&self) -> usize {
        (self.history_length + 1) * self.grid.pixel_count()
    }

    pub fn num_chunks_planned(&self) -> u32 {
        self.num_sims.div_ceil(self.sims_per_chunk)
    }

    /// Same generation request, ignoring progress and hashes.
    fn same_request(&self, other: &DatasetManifest) -> bool {
        self.scenario_sha256 == other.scenario_sha256
            && self.grid == other.grid
            && self.history_length == other.history_length
            && self.num_sims == other.num_sims
            && self.steps == other.steps
            && self.seed == other.seed
            && self.sims_per_chunk == other.sims_per_chunk
    }

    fn write(&self, dir: &Path) -> Result<()> {
        let tmp = dir.join("manifest.json.tmp");
        fs::write(&tmp, serde_json::to_string_pretty(self)? + "\n")?;
        fs::rename(&tmp, dir.join(MANIFEST_FILE))?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn scenario_hash(config: &ScenarioConfig) -> String {
    sha256_hex(serde_json::to_string(config).expect("plain data").as_bytes())
}

#[derive(Debug, Clone)]
pub struct GenerateRequest {
    pub scenario: ScenarioConfig,
    pub pixels_per_km: usize,
    pub history_length: usize,
    pub num_sims: u32,
    pub steps: usize,
    /// Upper bound on chunk payload size; at least one sim per chunk.
    pub chunk_bytes: usize,
    pub resume: bool,
}

fn chunk_name(index: u32) -> String {
    format!("chunk-{index:05}.bin")
}

/// Simulates and rasterizes sims `first..first + count` into one chunk tensor.
fn build_chunk(req: &GenerateRequest, grid: &GridSpec, first: u32, count: u32) -> Result<Vec<f32>> {
    let pulse = PulseConfig::for_grid(grid);
    let per_sim: Vec<Vec<f32>> = (first..first + count)
        .into_par_iter()
        .map(|s| -> Result<Vec<f32>> {
            let sim = run_simulation(&req.scenario, s, req.steps)?;
            let r = rasterize_simulation(&sim, &req.scenario, grid, &pulse)?;
            let mut out = Vec::with_capacity(req.steps * (req.history_length + 1) * grid.pixel_count());
            for t in 0..req.steps {
                out.extend_from_slice(&r.history(t, req.history_length)?.values);
                out.extend_from_slice(&r.targets[t].values);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(per_sim.concat())
}

/// Generates (or resumes) a dataset in `dir`. Output depends only on the
/// request, never on the number of worker threads.
pub fn generate(dir: &Path, req: &GenerateRequest) -> Result<DatasetManifest> {
    ensure!(req.num_sims > 0 && req.steps > 0, "need at least one simulation and one step");
    ensure!(req.history_length > 0, "history length must be positive");
    req.scenario.validate()?;
    let grid = GridSpec::for_window(req.scenario.window_width_km, req.pixels_per_km)?;
    fs::create_dir_all(dir)?;

    let frame_bytes = 4 * (req.history_length + 1) * grid.pixel_count();
    let sim_bytes = (frame_bytes * req.steps).max(1);
    let sims_per_chunk = ((req.chunk_bytes / sim_bytes).max(1) as u32).min(req.num_sims);
    let mut manifest = DatasetManifest {
        schema_version: MANIFEST_SCHEMA,
        code_version: CODE_VERSION.to_string(),
        scenario: req.scenario.clone(),
        scenario_sha256: scenario_hash(&req.scenario),
        grid,
        pixels_per_km: req.pixels_per_km,
        history_length: req.history_length,
        num_sims: req.num_sims,
        steps: req.steps,
        seed: req.scenario.seed,
        sims_per_chunk,
        chunks: Vec::new(),
        complete: false,
    };

    let existing = dir.join(MANIFEST_FILE).exists();
    let stray_chunks = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .any(|e| e.file_name().to_string_lossy().starts_with("chunk-"));
    if existing || stray_chunks {
        if !req.resume {
            bail!(
                "{} already holds a dataset or partial output; pass --resume to continue it",
                dir.display()
            );
        }
        if existing {
            let old = DatasetManifest::read(dir)?;
            ensure!(old.same_request(&manifest), "existing dataset was generated with different settings");
            for c in &old.chunks {
                let h = sha256_file(&dir.join(&c.file))?;
                ensure!(h == c.sha256, FormatError::Hash(c.file.clone()));
            }
            manifest.chunks = old.chunks;
        }
    }

    for index in manifest.chunks.len() as u32..manifest.num_chunks_planned() {
        let first = index * sims_per_chunk;
        let count = sims_per_chunk.min(req.num_sims - first);
        let data = build_chunk(req, &grid, first, count)?;
        let frames = count as usize * req.steps;
        let n = grid.width_pixels as u64;
        let shape = [frames as u64, (req.history_length + 1) as u64, n, n];
        let file = chunk_name(index);
        let sha256 = write_chunk(&dir.join(&file), shape, &data)?;
        manifest.chunks.push(ChunkEntry {
            file,
            first_sim: first,
            num_sims: count,
            frames,
            byte_offset: HEADER_LEN,
            shape,
            sha256,
        });
        manifest.write(dir)?;
    }
    manifest.complete = true;
    manifest.write(dir)?;
    Ok(manifest)
}

/// A complete, hash-verified dataset read lazily frame by frame.
#[derive(Debug, Clone)]
pub struct Dataset {
    dir: PathBuf,
    pub manifest: DatasetManifest,
}

impl Dataset {
    pub fn open(dir: &Path) -> Result<Self> {
        let manifest = DatasetManifest::read(dir)?;
        ensure!(manifest.complete, "dataset in {} is incomplete; resume generation first", dir.display());
        ensure!(manifest.schema_version == MANIFEST_SCHEMA, "unsupported manifest schema");
        for c in &manifest.chunks {
            let path = dir.join(&c.file);
            let h = sha256_file(&path)?;
            ensure!(h == c.sha256, FormatError::Hash(c.file.clone()));
        }
        Ok(Dataset {
            dir: dir.to_path_buf(),
            manifest,
        })
    }

    pub fn grid(&self) -> GridSpec {
        self.manifest.grid
    }

    /// Raw frame: K history channels followed by the target channel.
    pub fn frame(&self, index: usize) -> Result<Vec<f32>> {
        let mut base = 0;
        for c in &self.manifest.chunks {
            if index < base + c.frames {
                let elems = self.manifest.frame_elements();
                let mut f = File::open(self.dir.join(&c.file))?;
                f.seek(SeekFrom::Start((c.byte_offset + 4 * elems * (index - base)) as u64))?;
                let mut bytes = vec![0u8; 4 * elems];
                f.read_exact(&mut bytes)?;
                return Ok(bytes
                    .chunks_exact(4)
                    .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
                    .collect());
            }
            base += c.frames;
        }
        bail!("frame {index} out of range")
    }
}

impl SampleSource for Dataset {
    fn len(&self) -> usize {
        self.manifest.num_frames()
    }

    fn sample(&self, index: usize) -> transmtt_core::Result<Sample> {
        let k = self.manifest.history_length;
        let grid = self.grid();
        let mut values = self
            .frame(index)
            .map_err(|e| transmtt_core::Error::Dataset(format!("{e:#}")))?;
        let target = values.split_off(k * grid.pixel_count());
        Ok(Sample {
            input: IntensityImage::from_values(grid, k, values)?,
            target: IntensityImage::from_values(grid, 1, target)?,
        })
    }
}
