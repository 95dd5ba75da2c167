use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use fvmd_core::synth::{generate_video, MotionLaw, SynthConfig};
use fvmd_core::video_io::{list_videos, load_frames, save_frames};
use fvmd_core::{fvmd, FieldSelection, FrameSequence, HistogramKind, NoiseKind};
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{RunConfig, TrackerKind};
use crate::error::CliError;
use crate::experiments::{sanity_scores, sensitivity_scores, summarize_sanity};
use crate::pipeline::{extract_features, load_source, timed, track_video_set, write_trajectories, StageTimings};
use crate::report::{emit, write_csv, FvmdReport, SANITY_SCHEMA, SENSITIVITY_SCHEMA};

#[derive(Debug, Parser)]
#[command(name = "fvmd", version, about = "Fréchet Video Motion Distance between two video sets")]
pub struct Cli {
    /// More log output (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

/// Pipeline settings. Values come from the defaults, then `--config`, then flags.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// JSON run configuration (for example the `config` object of a report).
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long, value_name = "F")]
    pub frames_per_clip: Option<usize>,
    #[arg(long, value_name = "S")]
    pub stride: Option<usize>,
    /// Number of query points; must be a perfect square.
    #[arg(long, value_name = "N")]
    pub grid_n: Option<usize>,
    #[arg(long, value_name = "f")]
    pub volume_f: Option<usize>,
    #[arg(long, value_name = "k")]
    pub volume_k: Option<usize>,
    /// velocity, acceleration or combined.
    #[arg(long)]
    pub fields: Option<FieldSelection>,
    /// 1d or 2d.
    #[arg(long)]
    pub hist: Option<HistogramKind>,
    /// builtin or import.
    #[arg(long)]
    pub tracker: Option<TrackerKind>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    pub workers: Option<usize>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut c = match &self.config {
            Some(path) => RunConfig::from_json_file(path)?,
            None => RunConfig::default(),
        };
        macro_rules! apply {
            ($($field:ident),*) => { $( if let Some(v) = self.$field.clone() { c.$field = v; } )* };
        }
        apply!(frames_per_clip, stride, grid_n, volume_f, volume_k, fields, hist, tracker, eps, seed, workers);
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Track every clip of a video set and write an FVMDTRAJ file.
    Track {
        /// Directory with one subdirectory of frames per video.
        videos: PathBuf,
        /// Output trajectory file; a `.json` sidecar is written next to it.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// FVMD between a generated and a reference set (directories or FVMDTRAJ files).
    Compute {
        gen: PathBuf,
        reference: PathBuf,
        /// Also write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Save tracked trajectories as `gen.fvmdtraj` / `ref.fvmdtraj` in this directory.
        #[arg(long, value_name = "DIR")]
        trajectories: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Same-set vs cross-set scores over growing subset sizes.
    Sanity {
        /// Video set directory or FVMDTRAJ file.
        dataset: PathBuf,
        /// Second dataset for cross-set rows.
        #[arg(long)]
        cross: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "64,128,256,512")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        /// CSV output (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Save tracked trajectories as `dataset.fvmdtraj` / `cross.fvmdtraj` in this directory.
        #[arg(long, value_name = "DIR")]
        trajectories: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// FVMD of temporally perturbed copies of a video set against the clean set.
    Sensitivity {
        dataset: PathBuf,
        /// Comma-separated noise kinds.
        #[arg(long, value_delimiter = ',', default_value = "local_swap,global_swap,interleave,switch")]
        noise: Vec<NoiseKind>,
        /// Add an intensity-0 row per kind.
        #[arg(long)]
        include_zero: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Write a synthetic video set (PNG frames).
    Synth {
        out_dir: PathBuf,
        #[arg(long, default_value_t = 16)]
        count: usize,
        #[arg(long, default_value_t = 16)]
        frames: usize,
        #[arg(long, default_value_t = 256)]
        size: u32,
        #[arg(long, default_value_t = 4)]
        sprites: usize,
        /// constant_velocity, sinusoidal or random_walk.
        #[arg(long, default_value = "constant_velocity")]
        law: MotionLaw,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

impl Command {
    fn workers(&self) -> Result<usize, CliError> {
        match self {
            Command::Track { config, .. }
            | Command::Compute { config, .. }
            | Command::Sanity { config, .. }
            | Command::Sensitivity { config, .. } => Ok(config.resolve()?.workers),
            Command::Synth { .. } => Ok(0),
        }
    }
}

/// Runs a parsed command on a pool of the configured size.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let workers = cli.command.workers()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {workers} workers: {e}")))?;
    pool.install(|| dispatch(cli.command))
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Track { videos, out, config } => cmd_track(&videos, &out, &config.resolve()?),
        Command::Compute { gen, reference, out, trajectories, config } => {
            let report = cmd_compute(&gen, &reference, &config.resolve()?, trajectories.as_deref())?;
            let json = report.to_json() + "\n";
            if let Some(path) = &out {
                emit(json.as_bytes(), Some(path))?;
            }
            emit(json.as_bytes(), None)
        }
        Command::Sanity { dataset, cross, sizes, repeats, out, trajectories, config } => {
            cmd_sanity(&dataset, cross.as_deref(), &sizes, repeats, &config.resolve()?, trajectories.as_deref(), out.as_deref())
        }
        Command::Sensitivity { dataset, noise, include_zero, out, config } => {
            cmd_sensitivity(&dataset, &noise, include_zero, &config.resolve()?, out.as_deref())
        }
        Command::Synth { out_dir, count, frames, size, sprites, law, seed } => {
            cmd_synth(&out_dir, &SynthConfig { frames, size, sprites, law }, count, seed)
        }
    }
}

#[derive(Serialize)]
struct TrackSummary<'a> {
    out: String,
    videos: usize,
    videos_failed: usize,
    clips: usize,
    timings: StageTimings,
    config: &'a RunConfig,
}

pub fn cmd_track(videos: &Path, out: &Path, config: &RunConfig) -> Result<(), CliError> {
    if config.tracker == TrackerKind::Import {
        return Err(CliError::Usage("`track` runs the built-in tracker; tracker=import makes no sense here".into()));
    }
    if !videos.is_dir() {
        return Err(CliError::Input(format!("{} is not a readable directory", videos.display())));
    }
    let mut timings = StageTimings::default();
    let data = track_video_set(videos, config, &mut timings)?;
    write_trajectories(&data.trajectories, out)?;
    let summary = TrackSummary {
        out: out.display().to_string(),
        videos: data.videos,
        videos_failed: data.videos_failed,
        clips: data.clips(),
        timings,
        config,
    };
    emit((serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n").as_bytes(), None)
}

pub fn cmd_compute(
    gen: &Path,
    reference: &Path,
    config: &RunConfig,
    trajectories: Option<&Path>,
) -> Result<FvmdReport, CliError> {
    let start = Instant::now();
    let mut timings = StageTimings::default();
    let cache = |name: &str| trajectories.map(|d| d.join(format!("{name}.fvmdtraj")));
    let gen_data = load_source(gen, config, cache("gen").as_deref(), &mut timings)?;
    let ref_data = load_source(reference, config, cache("ref").as_deref(), &mut timings)?;
    let gen_features = extract_features(&gen_data.trajectories, config, &mut timings)?;
    let ref_features = extract_features(&ref_data.trajectories, config, &mut timings)?;
    let (score, t) = timed(|| fvmd(&gen_features, &ref_features, config.eps));
    timings.frechet_s += t.as_secs_f64();
    let score = score?;
    if score.numerical_warning {
        warn!("numerical warning: the distance was clamped by more than 1e-6 of the covariance trace");
    }
    let wall = start.elapsed().as_secs_f64();
    Ok(FvmdReport::new(&score, &gen_data, &ref_data, timings, wall, config))
}

pub fn cmd_sanity(
    dataset: &Path,
    cross: Option<&Path>,
    sizes: &[usize],
    repeats: usize,
    config: &RunConfig,
    trajectories: Option<&Path>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let mut timings = StageTimings::default();
    let cache = |name: &str| trajectories.map(|d| d.join(format!("{name}.fvmdtraj")));
    let a = load_source(dataset, config, cache("dataset").as_deref(), &mut timings)?;
    let a = extract_features(&a.trajectories, config, &mut timings)?;
    let b = match cross {
        Some(path) => {
            let data = load_source(path, config, cache("cross").as_deref(), &mut timings)?;
            Some(extract_features(&data.trajectories, config, &mut timings)?)
        }
        None => None,
    };
    let rows = sanity_scores(&a, b.as_deref(), sizes, repeats, config.seed, config.eps)?;
    for s in summarize_sanity(&rows) {
        match s.cross {
            Some(c) => info!("size {}: same {:.4}, cross {:.4}", s.size, s.same, c),
            None => info!("size {}: same {:.4}", s.size, s.same),
        }
    }
    let mut buf = Vec::new();
    write_csv(&mut buf, SANITY_SCHEMA, &rows)?;
    emit(&buf, out)
}

/// Loads every readable video of a set, skipping (and logging) the rest.
pub fn load_video_set(dir: &Path) -> Result<Vec<FrameSequence>, CliError> {
    let paths = list_videos(dir)?;
    let loaded: Vec<_> = paths.par_iter().map(load_frames).collect();
    let mut videos = Vec::new();
    for (path, result) in paths.iter().zip(loaded) {
        match result {
            Ok(v) => videos.push(v),
            Err(e) => warn!("skipping {}: {e}", path.display()),
        }
    }
    if videos.is_empty() {
        return Err(CliError::Input(format!("no readable videos under {}", dir.display())));
    }
    Ok(videos)
}

pub fn cmd_sensitivity(
    dataset: &Path,
    kinds: &[NoiseKind],
    include_zero: bool,
    config: &RunConfig,
    out: Option<&Path>,
) -> Result<(), CliError> {
    if !dataset.is_dir() {
        return Err(CliError::Input(format!("{} is not a video set directory", dataset.display())));
    }
    let videos = load_video_set(dataset)?;
    let rows = sensitivity_scores(&videos, kinds, include_zero, config)?;
    let mut buf = Vec::new();
    write_csv(&mut buf, SENSITIVITY_SCHEMA, &rows)?;
    emit(&buf, out)
}

pub fn cmd_synth(out_dir: &Path, synth: &SynthConfig, count: usize, seed: u64) -> Result<(), CliError> {
    if synth.frames < 2 || synth.size < 16 || count == 0 {
        return Err(CliError::Usage("synth needs count >= 1, frames >= 2 and size >= 16".into()));
    }
    fs::create_dir_all(out_dir).map_err(|e| CliError::output(out_dir, e))?;
    (0..count).into_par_iter().try_for_each(|i| {
        let id = format!("video_{i:05}");
        let video = generate_video(synth, &id, seed);
        save_frames(&video, out_dir.join(&id)).map_err(|e| CliError::output(out_dir.join(&id), e))
    })?;
    info!("wrote {count} {} videos to {}", synth.law, out_dir.display());
    Ok(())
}
