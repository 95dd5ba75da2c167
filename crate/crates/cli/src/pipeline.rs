//! Videos or trajectory files in, per-clip features out.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use fvmd_core::video_io::{list_videos, load_frames, preprocess, segment, CANONICAL_SIZE};
use fvmd_core::{
    export_trajectories, extract_feature, import_trajectories, init_grid, track_builtin, FrameSequence,
    MotionFeature64, QueryGrid, TrajectorySet32, TrajectorySource,
};
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, TrackerKind};
use crate::error::CliError;

/// Seconds spent per stage. Stages run on a worker pool, so each field is the
/// summed time of that stage across workers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub load_s: f64,
    pub track_s: f64,
    pub features_s: f64,
    pub frechet_s: f64,
}

impl StageTimings {
    pub fn total(&self) -> f64 {
        self.load_s + self.track_s + self.features_s + self.frechet_s
    }

    pub fn add(&mut self, other: &StageTimings) {
        self.load_s += other.load_s;
        self.track_s += other.track_s;
        self.features_s += other.features_s;
        self.frechet_s += other.frechet_s;
    }
}

pub fn timed<R>(f: impl FnOnce() -> R) -> (R, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Videos,
    Trajectories,
}

/// A file is an FVMDTRAJ import; a directory is a video set for the tracker.
pub fn classify(path: &Path, config: &RunConfig) -> Result<SourceKind, CliError> {
    if path.is_file() {
        Ok(SourceKind::Trajectories)
    } else if path.is_dir() {
        match config.tracker {
            TrackerKind::Builtin => Ok(SourceKind::Videos),
            TrackerKind::Import => Err(CliError::Usage(format!(
                "{} is a directory, but tracker=import expects an FVMDTRAJ file",
                path.display()
            ))),
        }
    } else {
        Err(CliError::Input(format!("cannot read {}: no such file or directory", path.display())))
    }
}

/// Trajectories of one input plus bookkeeping for the report.
#[derive(Clone, Debug)]
pub struct SourceData {
    pub path: PathBuf,
    pub kind: SourceKind,
    pub trajectories: Vec<TrajectorySet32>,
    pub videos: usize,
    pub videos_failed: usize,
}

impl SourceData {
    pub fn clips(&self) -> usize {
        self.trajectories.len()
    }

    /// `builtin_lk`, `imported`, or `mixed` when a file holds both.
    pub fn tracker_source(&self) -> String {
        let mut kinds: Vec<TrajectorySource> = self.trajectories.iter().map(|t| t.source()).collect();
        kinds.dedup();
        match kinds.as_slice() {
            [one] => one.as_str().to_string(),
            [] => "none".to_string(),
            _ => "mixed".to_string(),
        }
    }
}

pub fn canonical_grid(config: &RunConfig) -> Result<QueryGrid, CliError> {
    Ok(init_grid(config.grid_n, CANONICAL_SIZE, CANONICAL_SIZE)?)
}

/// Preprocesses, segments and tracks one video.
pub fn track_sequence(
    seq: &FrameSequence,
    config: &RunConfig,
    grid: &QueryGrid,
) -> Result<Vec<TrajectorySet32>, CliError> {
    let seq = preprocess(seq);
    track_preprocessed(&seq, config, grid)
}

/// Segments and tracks a video that is already at the canonical size.
pub fn track_preprocessed(
    seq: &FrameSequence,
    config: &RunConfig,
    grid: &QueryGrid,
) -> Result<Vec<TrajectorySet32>, CliError> {
    segment(seq, config.clip_spec())?
        .iter()
        .map(|clip| track_builtin(clip, grid, &config.lk).map_err(CliError::from))
        .collect()
}

/// Loads and tracks every video under `dir`. Videos that fail are logged and
/// skipped; the call fails only when none succeed.
pub fn track_video_set(dir: &Path, config: &RunConfig, timings: &mut StageTimings) -> Result<SourceData, CliError> {
    let videos = list_videos(dir)?;
    if videos.is_empty() {
        return Err(CliError::Input(format!("no video directories under {}", dir.display())));
    }
    let grid = canonical_grid(config)?;
    let stage = Mutex::new(StageTimings::default());
    let results: Vec<Result<Vec<TrajectorySet32>, CliError>> = videos
        .par_iter()
        .map(|path| {
            let (loaded, load_t) = timed(|| load_frames(path));
            let (tracked, track_t) = timed(|| loaded.map_err(CliError::from).and_then(|s| track_sequence(&s, config, &grid)));
            let mut st = stage.lock().expect("timing lock");
            st.load_s += load_t.as_secs_f64();
            st.track_s += track_t.as_secs_f64();
            tracked
        })
        .collect();
    timings.add(&stage.into_inner().expect("timing lock"));

    let mut trajectories = Vec::new();
    let mut failed = 0;
    let mut last_error = None;
    for (path, result) in videos.iter().zip(results) {
        match result {
            Ok(sets) => trajectories.extend(sets),
            Err(e) => {
                warn!("skipping {}: {e}", path.display());
                failed += 1;
                last_error = Some(e);
            }
        }
    }
    if failed == videos.len() {
        let e = last_error.expect("at least one video");
        return Err(CliError::Input(format!("all {failed} videos under {} failed; last error: {e}", dir.display())));
    }
    info!("{}: tracked {} clips from {} videos ({} skipped)", dir.display(), trajectories.len(), videos.len() - failed, failed);
    Ok(SourceData { path: dir.to_path_buf(), kind: SourceKind::Videos, trajectories, videos: videos.len(), videos_failed: failed })
}

/// Imports an FVMDTRAJ file and checks its shape against the configuration.
pub fn import_source(path: &Path, config: &RunConfig, timings: &mut StageTimings) -> Result<SourceData, CliError> {
    let (sets, t) = timed(|| import_trajectories(path));
    timings.load_s += t.as_secs_f64();
    let sets = sets?;
    let first = &sets[0];
    if first.frames() != config.frames_per_clip || first.points() != config.grid_n {
        return Err(CliError::Incompatible(format!(
            "{} holds {}-frame clips with {} points, configuration expects {} frames and {} points",
            path.display(),
            first.frames(),
            first.points(),
            config.frames_per_clip,
            config.grid_n
        )));
    }
    let mut videos: Vec<&str> = sets.iter().filter_map(|s| s.origin().map(|o| o.video_id.as_str())).collect();
    videos.dedup();
    Ok(SourceData {
        path: path.to_path_buf(),
        kind: SourceKind::Trajectories,
        videos: videos.len(),
        trajectories: sets,
        videos_failed: 0,
    })
}

/// Resolves a path to trajectories, tracking or importing as appropriate.
/// Tracked trajectories are also written to `cache` when given.
pub fn load_source(
    path: &Path,
    config: &RunConfig,
    cache: Option<&Path>,
    timings: &mut StageTimings,
) -> Result<SourceData, CliError> {
    match classify(path, config)? {
        SourceKind::Trajectories => import_source(path, config, timings),
        SourceKind::Videos => {
            let data = track_video_set(path, config, timings)?;
            if let Some(out) = cache {
                write_trajectories(&data.trajectories, out)?;
            }
            Ok(data)
        }
    }
}

pub fn write_trajectories(sets: &[TrajectorySet32], path: &Path) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::output(parent, e))?;
    }
    export_trajectories(sets, path)?;
    Ok(())
}

/// Per-clip features in input order.
pub fn extract_features(
    trajectories: &[TrajectorySet32],
    config: &RunConfig,
    timings: &mut StageTimings,
) -> Result<Vec<MotionFeature64>, CliError> {
    let feature_config = config.feature_config();
    let (features, t) = timed(|| {
        trajectories
            .par_iter()
            .map(|traj| extract_feature(&traj.cast::<f64>(), &feature_config))
            .collect::<Result<Vec<_>, _>>()
    });
    timings.features_s += t.as_secs_f64();
    Ok(features?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use fvmd_core::synth::{generate_video, SynthConfig};
    use fvmd_core::video_io::save_frames;

    fn small_config() -> RunConfig {
        RunConfig { frames_per_clip: 4, grid_n: 25, volume_f: 2, volume_k: 5, ..RunConfig::default() }
    }

    #[test]
    fn classify_by_path_type() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("t.bin");
        fs::write(&file, b"x").unwrap();
        let cfg = RunConfig::default();
        assert_eq!(classify(&file, &cfg).unwrap(), SourceKind::Trajectories);
        assert_eq!(classify(dir.path(), &cfg).unwrap(), SourceKind::Videos);
        let import = RunConfig { tracker: TrackerKind::Import, ..cfg.clone() };
        assert!(matches!(classify(dir.path(), &import), Err(CliError::Usage(_))));
        assert!(matches!(classify(&dir.path().join("missing"), &cfg), Err(CliError::Input(_))));
    }

    #[test]
    fn bad_videos_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let synth = SynthConfig { frames: 6, size: 64, sprites: 1, ..SynthConfig::default() };
        save_frames(&generate_video(&synth, "a", 1), dir.path().join("a")).unwrap();
        fs::create_dir(dir.path().join("b_empty")).unwrap();
        let short = SynthConfig { frames: 2, ..synth.clone() };
        save_frames(&generate_video(&short, "c", 1), dir.path().join("c_short")).unwrap();
        let mut t = StageTimings::default();
        let data = track_video_set(dir.path(), &small_config(), &mut t).unwrap();
        assert_eq!((data.videos, data.videos_failed, data.clips()), (3, 2, 3));
        assert_eq!(data.tracker_source(), "builtin_lk");
        assert!(t.load_s >= 0.0 && t.track_s > 0.0);
    }

    #[test]
    fn all_failures_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("empty")).unwrap();
        let mut t = StageTimings::default();
        assert!(matches!(track_video_set(dir.path(), &small_config(), &mut t), Err(CliError::Input(_))));
    }

    #[test]
    fn import_checks_shape_against_config() {
        let dir = tempfile::tempdir().unwrap();
        let grid = init_grid(25, 256, 256).unwrap();
        let set = TrajectorySet32::stationary(&grid, 4).unwrap();
        let path = dir.path().join("t.fvmdtraj");
        write_trajectories(&[set.clone(), set], &path).unwrap();
        let mut t = StageTimings::default();
        let data = import_source(&path, &small_config(), &mut t).unwrap();
        assert_eq!(data.clips(), 2);
        let other = RunConfig { frames_per_clip: 8, ..small_config() };
        assert!(matches!(import_source(&path, &other, &mut t), Err(CliError::Incompatible(_))));
    }
}
