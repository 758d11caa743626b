use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use transmtt_core::bound::{check_bound, BoundReport};
use transmtt_core::eval::{score_frame, summarize, tracking_frames, FrameScore, OspaConfig, Predictor, TrackingSummary};
use transmtt_core::nn::{build_model, Model};
use transmtt_core::raster::{rasterize_simulation, GridSpec, PulseConfig, RasterizedSimulation};
use transmtt_core::scenario::{run_simulation, ScenarioConfig};
use transmtt_core::train::{self, SimulationSamples, WindowSpec};

use crate::checkpoint::Checkpoint;
use crate::config::{self, ScenarioFile, SweepPlan, TrainFile};
use crate::dataset::{self, Dataset, GenerateRequest, MANIFEST_FILE};
use crate::render::{self, PanelFrame};
use crate::report::{self, FrameRow, MetricsRow, RunManifest, SummaryRow, SweepRow};

#[derive(Debug, Parser)]
#[command(name = "transmtt", version, about = "Train-small, run-large CNN multi-target tracking")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate and rasterize a dataset of (observation history, target) pairs.
    Generate(GenerateArgs),
    /// Train a model on a generated dataset.
    Train(TrainArgs),
    /// Score a checkpoint with OSPA on fresh simulations at one width.
    Eval(EvalArgs),
    /// Evaluate and bound-check a checkpoint over a list of widths.
    Sweep(SweepArgs),
    /// Check the windowed-to-large loss bound at one width.
    Bound(BoundArgs),
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => generate(&a).map(|_| ()),
        Command::Train(a) => train(&a).map(|_| ()),
        Command::Eval(a) => eval(&a).map(|_| ()),
        Command::Sweep(a) => sweep(&a).map(|_| ()),
        Command::Bound(a) => bound(&a).map(|_| ()),
    }
}

fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build()?;
    pool.install(f)
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    /// Scenario TOML file.
    #[arg(long)]
    pub config: PathBuf,
    /// Dataset directory.
    #[arg(long, env = "TRANSMTT_OUT_DIR")]
    pub out: PathBuf,
    #[arg(long)]
    pub sims: u32,
    #[arg(long)]
    pub steps: usize,
    /// Overrides the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, env = "TRANSMTT_WORKERS", default_value_t = 1)]
    pub workers: usize,
    /// Maximum chunk payload, bytes.
    #[arg(long, default_value_t = dataset::CHUNK_TARGET_BYTES)]
    pub chunk_bytes: usize,
    /// Continue a partial dataset instead of refusing.
    #[arg(long)]
    pub resume: bool,
}

pub fn generate(args: &GenerateArgs) -> Result<dataset::DatasetManifest> {
    let file: ScenarioFile = config::load(&args.config)?;
    let mut scenario = file.scenario.build(None)?;
    if let Some(s) = args.seed {
        scenario.seed = s;
    }
    let req = GenerateRequest {
        scenario: scenario.clone(),
        pixels_per_km: file.grid.pixels_per_km,
        history_length: file.grid.history_length,
        num_sims: args.sims,
        steps: args.steps,
        chunk_bytes: args.chunk_bytes,
        resume: args.resume,
    };
    let manifest = with_workers(args.workers, || dataset::generate(&args.out, &req))?;
    let mut run = RunManifest::new("generate");
    run.config("scenario_file", &file)?;
    run.config("scenario", &scenario)?;
    run.seeds.insert("scenario".into(), scenario.seed);
    run.dataset_hashes = dataset_hashes(&args.out, &manifest)?;
    run.outputs = manifest.chunks.iter().map(|c| c.file.clone()).collect();
    run.outputs.push(MANIFEST_FILE.into());
    run.write(&args.out)?;
    Ok(manifest)
}

fn dataset_hashes(dir: &Path, m: &dataset::DatasetManifest) -> Result<std::collections::BTreeMap<String, String>> {
    let mut h = std::collections::BTreeMap::new();
    h.insert(MANIFEST_FILE.to_string(), dataset::sha256_file(&dir.join(MANIFEST_FILE))?);
    for c in &m.chunks {
        h.insert(c.file.clone(), c.sha256.clone());
    }
    Ok(h)
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Dataset directory written by `generate`.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Training TOML file.
    #[arg(long)]
    pub config: PathBuf,
    /// Directory for the checkpoint, metrics CSV and run manifest.
    #[arg(long, env = "TRANSMTT_OUT_DIR")]
    pub out: PathBuf,
    #[arg(long, default_value = "model.ckpt")]
    pub checkpoint: String,
}

pub fn train(args: &TrainArgs) -> Result<(Checkpoint, Vec<MetricsRow>)> {
    let file: TrainFile = config::load(&args.config)?;
    let data = Dataset::open(&args.dataset)?;
    let grid = data.grid();
    let spec = file.model.spec(data.manifest.history_length, &grid)?;
    let mut model = build_model::<f32>(&spec, file.model.seed)?;
    model.check_input_width(grid.width_pixels)?;
    let window = file.window.resolve(&grid, &spec)?;
    fs::create_dir_all(&args.out)?;

    let metrics_path = args.out.join("metrics.csv");
    let start = Instant::now();
    let mut rows = Vec::new();
    let mut write_error = None;
    train::train(&mut model, &data, window, &file.train, |epoch, report| {
        rows.push(MetricsRow::new(epoch, report, start.elapsed().as_secs_f64()));
        if let Err(e) = report::write_csv(&metrics_path, &rows) {
            write_error.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_error {
        return Err(e);
    }
    let ck = Checkpoint::new(model, file.model.seed, data.manifest.pixels_per_km, grid.extent(), window);
    ck.save(&args.out.join(&args.checkpoint))?;

    let mut run = RunManifest::new("train");
    run.config("train_file", &file)?;
    run.config("model_spec", &spec)?;
    run.config("window", &window)?;
    run.config("dataset_scenario", &data.manifest.scenario)?;
    run.seeds.insert("model_init".into(), file.model.seed);
    run.seeds.insert("shuffle".into(), file.train.seed);
    run.seeds.insert("dataset".into(), data.manifest.seed);
    run.dataset_hashes = dataset_hashes(&args.dataset, &data.manifest)?;
    run.outputs = vec![args.checkpoint.clone(), "metrics.csv".into()];
    run.write(&args.out)?;
    Ok((ck, rows))
}

/// Scenario and grid for `width_km`, checked against the checkpoint.
fn setup(ck: &Checkpoint, file: &ScenarioFile, width_km: f64, seed: Option<u64>) -> Result<(ScenarioConfig, GridSpec)> {
    ensure!(
        file.grid.pixels_per_km == ck.header.pixels_per_km,
        "config uses {} px/km but the checkpoint was trained at {}",
        file.grid.pixels_per_km,
        ck.header.pixels_per_km
    );
    ensure!(
        file.grid.history_length == ck.header.spec.history_length,
        "config stacks {} frames but the model expects {}",
        file.grid.history_length,
        ck.header.spec.history_length
    );
    let mut scenario = file.scenario.build(Some(width_km))?;
    if let Some(s) = seed {
        scenario.seed = s;
    }
    let grid = GridSpec::for_window(width_km, ck.header.pixels_per_km)?;
    ck.model
        .check_input_width(grid.width_pixels)
        .with_context(|| format!("width {width_km} km is incompatible with the model"))?;
    Ok((scenario, grid))
}

fn rasterize(scenario: &ScenarioConfig, grid: &GridSpec, sims: u32, steps: usize) -> Result<Vec<RasterizedSimulation>> {
    let pulse = PulseConfig::for_grid(grid);
    (0..sims)
        .into_par_iter()
        .map(|s| Ok(rasterize_simulation(&run_simulation(scenario, s, steps)?, scenario, grid, &pulse)?))
        .collect()
}

/// Per-frame OSPA over fresh simulations, parallel over simulations.
pub fn evaluate_width(
    model: &Model<f32>,
    scenario: &ScenarioConfig,
    grid: &GridSpec,
    sims: u32,
    steps: usize,
    extraction_seed: u64,
) -> Result<(Vec<FrameScore>, TrackingSummary)> {
    let pulse = PulseConfig::for_grid(grid);
    let ospa = OspaConfig::default();
    let k = model.spec.history_length;
    let per_sim: Vec<Vec<FrameScore>> = (0..sims)
        .into_par_iter()
        .map(|s| -> Result<Vec<FrameScore>> {
            let sim = run_simulation(scenario, s, steps)?;
            let r = rasterize_simulation(&sim, scenario, grid, &pulse)?;
            tracking_frames(&sim, &r, k)?
                .iter()
                .map(|f| Ok(score_frame(model, f, &ospa, extraction_seed)?))
                .collect()
        })
        .collect::<Result<_>>()?;
    let scores: Vec<FrameScore> = per_sim.concat();
    let summary = summarize(&scores, scenario.window_width_km);
    Ok((scores, summary))
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Scenario TOML file; its window width is replaced by --width.
    #[arg(long)]
    pub config: PathBuf,
    /// Rendering window width, km.
    #[arg(long)]
    pub width: f64,
    #[arg(long)]
    pub sims: u32,
    #[arg(long)]
    pub steps: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Seed for k-means initialization.
    #[arg(long, default_value_t = 0)]
    pub extraction_seed: u64,
    /// Number of frames of the first simulation to render as PNG panels.
    #[arg(long, default_value_t = 0)]
    pub panels: usize,
    #[arg(long, env = "TRANSMTT_OUT_DIR")]
    pub out: PathBuf,
    #[arg(long, env = "TRANSMTT_WORKERS", default_value_t = 1)]
    pub workers: usize,
}

pub fn eval(args: &EvalArgs) -> Result<TrackingSummary> {
    let ck = Checkpoint::load(&args.checkpoint)?;
    let file: ScenarioFile = config::load(&args.config)?;
    let (scenario, grid) = setup(&ck, &file, args.width, args.seed)?;
    fs::create_dir_all(&args.out)?;
    let (scores, summary) = with_workers(args.workers, || {
        evaluate_width(&ck.model, &scenario, &grid, args.sims, args.steps, args.extraction_seed)
    })?;
    report::write_csv(&args.out.join("frames.csv"), &scores.iter().map(FrameRow::from).collect::<Vec<_>>())?;
    report::write_csv(&args.out.join("summary.csv"), &[SummaryRow::from(&summary)])?;
    let mut outputs = vec!["frames.csv".to_string(), "summary.csv".to_string()];

    if args.panels > 0 {
        let sim = run_simulation(&scenario, 0, args.steps)?;
        let r = rasterize_simulation(&sim, &scenario, &grid, &PulseConfig::for_grid(&grid))?;
        let count = args.panels.min(args.steps);
        let inputs = (0..count)
            .map(|t| r.history(t, ck.model.spec.history_length))
            .collect::<transmtt_core::Result<Vec<_>>>()?;
        let outs = inputs.iter().map(|x| ck.model.predict(x)).collect::<transmtt_core::Result<Vec<_>>>()?;
        let frames: Vec<PanelFrame> = (0..count)
            .map(|t| PanelFrame {
                name: format!("sim0_step{t:03}"),
                input: &inputs[t],
                output: &outs[t],
                target: &r.targets[t],
            })
            .collect();
        let meta = render::write_panels(&args.out, &frames)?;
        fs::write(args.out.join("panels.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
        outputs.extend(meta.files);
        outputs.push("panels.json".into());
    }

    let mut run = RunManifest::new("eval");
    run.config("scenario", &scenario)?;
    run.config("checkpoint", &ck.header)?;
    run.config("eval", &serde_json::json!({ "width_km": args.width, "sims": args.sims, "steps": args.steps }))?;
    run.seeds.insert("scenario".into(), scenario.seed);
    run.seeds.insert("extraction".into(), args.extraction_seed);
    run.dataset_hashes.insert("checkpoint".into(), dataset::sha256_file(&args.checkpoint)?);
    run.outputs = outputs;
    run.write(&args.out)?;
    Ok(summary)
}

/// Training window for bound checks: explicit when both widths are given,
/// otherwise the padding-free window of the training rasters.
fn bound_train_window(ck: &Checkpoint, input: Option<f64>, output: Option<f64>) -> Result<WindowSpec> {
    Ok(match (input, output) {
        (Some(a), Some(b)) => WindowSpec::new(a, b)?,
        (None, None) => {
            let rho = 1000.0 / ck.header.pixels_per_km as f64;
            WindowSpec::padding_free(ck.header.train_width_m, &ck.model.spec, rho)?
        }
        _ => bail!("give both --train-input-m and --train-output-m or neither"),
    })
}

/// Bound check with fresh simulations: `sims × steps` at the training width
/// (seed + 1) and at `width_km` (seed).
#[allow(clippy::too_many_arguments)]
fn bound_at(
    ck: &Checkpoint,
    file: &config::ScenarioSection,
    width_km: f64,
    sims: u32,
    steps: usize,
    seed: u64,
    train_window: WindowSpec,
) -> Result<BoundReport> {
    let ppkm = ck.header.pixels_per_km;
    let k = ck.model.spec.history_length;
    let train_km = ck.header.train_width_m / 1000.0;
    let mut small_cfg = file.build(Some(train_km))?;
    small_cfg.seed = seed + 1;
    let mut large_cfg = file.build(Some(width_km))?;
    large_cfg.seed = seed;
    let small_grid = GridSpec::for_window(train_km, ppkm)?;
    let large_grid = GridSpec::for_window(width_km, ppkm)?;
    let small = SimulationSamples::new(rasterize(&small_cfg, &small_grid, sims, steps)?, k);
    let large = SimulationSamples::new(rasterize(&large_cfg, &large_grid, sims, steps)?, k);
    let eval_window = WindowSpec::padding_free(large_grid.extent(), &ck.model.spec, large_grid.resolution)?;
    Ok(check_bound(&ck.model, train_window, &small, eval_window, &large)?)
}

#[derive(Debug, Clone, Args)]
pub struct BoundArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub config: PathBuf,
    /// Width of the large evaluation window, km.
    #[arg(long)]
    pub width: f64,
    #[arg(long)]
    pub sims: u32,
    #[arg(long)]
    pub steps: usize,
    #[arg(long, default_value_t = 2_000_000)]
    pub seed: u64,
    /// Training input window A, meters (defaults to the training width).
    #[arg(long)]
    pub train_input_m: Option<f64>,
    /// Training output window B, meters (defaults to the padding-free width).
    #[arg(long)]
    pub train_output_m: Option<f64>,
    #[arg(long, env = "TRANSMTT_OUT_DIR")]
    pub out: PathBuf,
    #[arg(long, env = "TRANSMTT_WORKERS", default_value_t = 1)]
    pub workers: usize,
}

pub fn bound(args: &BoundArgs) -> Result<BoundReport> {
    let ck = Checkpoint::load(&args.checkpoint)?;
    let file: ScenarioFile = config::load(&args.config)?;
    setup(&ck, &file, args.width, None)?;
    let train_window = bound_train_window(&ck, args.train_input_m, args.train_output_m)?;
    let report = with_workers(args.workers, || {
        bound_at(&ck, &file.scenario, args.width, args.sims, args.steps, args.seed, train_window)
    })?;
    fs::create_dir_all(&args.out)?;
    fs::write(args.out.join("bound_report.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    let mut run = RunManifest::new("bound");
    run.config("scenario_file", &file)?;
    run.config("checkpoint", &ck.header)?;
    run.config("bound", &serde_json::json!({ "width_km": args.width, "sims": args.sims, "steps": args.steps }))?;
    run.seeds.insert("large".into(), args.seed);
    run.seeds.insert("small".into(), args.seed + 1);
    run.dataset_hashes.insert("checkpoint".into(), dataset::sha256_file(&args.checkpoint)?);
    run.outputs = vec!["bound_report.json".into()];
    run.write(&args.out)?;
    Ok(report)
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Sweep plan TOML file.
    #[arg(long)]
    pub plan: PathBuf,
    #[arg(long, env = "TRANSMTT_OUT_DIR")]
    pub out: PathBuf,
    #[arg(long, env = "TRANSMTT_WORKERS", default_value_t = 1)]
    pub workers: usize,
}

pub fn sweep(args: &SweepArgs) -> Result<Vec<SweepRow>> {
    let ck = Checkpoint::load(&args.checkpoint)?;
    let plan: SweepPlan = config::load(&args.plan)?;
    plan.validate()?;
    ensure!(
        (plan.train_width_km * 1000.0 - ck.header.train_width_m).abs() < 1e-6,
        "plan trains at {} km but the checkpoint was trained at {} m",
        plan.train_width_km,
        ck.header.train_width_m
    );
    let file = ScenarioFile {
        scenario: plan.scenario.clone(),
        grid: config::GridSection {
            pixels_per_km: ck.header.pixels_per_km,
            history_length: ck.model.spec.history_length,
        },
    };
    let train_window = bound_train_window(&ck, None, None)?;
    fs::create_dir_all(&args.out)?;
    let mut rows = Vec::new();
    let mut outputs = Vec::new();
    for w in plan.sorted_widths() {
        let (mut scenario, grid) = setup(&ck, &file, w, None)?;
        scenario.seed = plan.seed;
        let (scores, summary) = with_workers(args.workers, || evaluate_width(&ck.model, &scenario, &grid, plan.sims, plan.steps, 0))?;
        let report = with_workers(args.workers, || {
            bound_at(&ck, &plan.scenario, w, plan.bound_sims, plan.bound_steps, plan.seed + 17, train_window)
        })?;
        let tag = format!("w{w}km");
        report::write_csv(&args.out.join(format!("frames_{tag}.csv")), &scores.iter().map(FrameRow::from).collect::<Vec<_>>())?;
        report::write_csv(&args.out.join(format!("summary_{tag}.csv")), &[SummaryRow::from(&summary)])?;
        fs::write(args.out.join(format!("bound_{tag}.json")), serde_json::to_string_pretty(&report)? + "\n")?;
        outputs.extend([format!("frames_{tag}.csv"), format!("summary_{tag}.csv"), format!("bound_{tag}.json")]);
        rows.push(SweepRow {
            w_km: w,
            mean_ospa_m: summary.mean_ospa,
            ci95_m: summary.ci95,
            loss_window: report.loss_window,
            loss_large: report.loss_large,
            c: report.c,
            h: report.h,
            holds: report.holds,
        });
    }
    report::write_csv(&args.out.join("sweep.csv"), &rows)?;
    render::plot_sweep(&args.out.join("sweep.svg"), &rows)?;
    outputs.extend(["sweep.csv".to_string(), "sweep.svg".to_string()]);

    let mut run = RunManifest::new("sweep");
    run.config("plan", &plan)?;
    run.config("checkpoint", &ck.header)?;
    run.seeds.insert("eval".into(), plan.seed);
    run.seeds.insert("bound_large".into(), plan.seed + 17);
    run.seeds.insert("bound_small".into(), plan.seed + 18);
    run.dataset_hashes.insert("checkpoint".into(), dataset::sha256_file(&args.checkpoint)?);
    run.outputs = outputs;
    run.write(&args.out)?;
    Ok(rows)
}
