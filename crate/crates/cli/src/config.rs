use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use fvmd_core::motion::MagnitudeMode;
use fvmd_core::tracking::perfect_square_root;
use fvmd_core::video_io::CANONICAL_SIZE;
use fvmd_core::{init_grid, ClipSpec, FeatureConfig, FieldSelection, HistogramKind, LkParams, VolumeSpec, DEFAULT_EPS};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// How video-set directories are turned into trajectories.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackerKind {
    /// Track directories with the built-in pyramidal Lucas-Kanade tracker.
    #[default]
    Builtin,
    /// Only accept precomputed FVMDTRAJ files.
    Import,
}

impl TrackerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrackerKind::Builtin => "builtin",
            TrackerKind::Import => "import",
        }
    }
}

impl fmt::Display for TrackerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrackerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "builtin" => Ok(TrackerKind::Builtin),
            "import" => Ok(TrackerKind::Import),
            _ => Err(format!("unknown tracker `{s}` (expected builtin or import)")),
        }
    }
}

/// Every knob that affects a score. Reports echo it verbatim, and feeding the
/// echo back through `--config` reproduces the run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub frames_per_clip: usize,
    pub stride: usize,
    pub grid_n: usize,
    pub volume_f: usize,
    pub volume_k: usize,
    pub fields: FieldSelection,
    pub hist: HistogramKind,
    pub magnitude: MagnitudeMode,
    pub tracker: TrackerKind,
    pub lk: LkParams,
    pub eps: f64,
    pub seed: u64,
    /// Worker threads; 0 uses every available core. Does not affect results.
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            frames_per_clip: 16,
            stride: 1,
            grid_n: 400,
            volume_f: 4,
            volume_k: 5,
            fields: FieldSelection::Combined,
            hist: HistogramKind::Hist1d,
            magnitude: MagnitudeMode::Quantized,
            tracker: TrackerKind::Builtin,
            lk: LkParams::default(),
            eps: DEFAULT_EPS,
            seed: 0,
            workers: 0,
        }
    }
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Checks every constraint that would otherwise fail deep inside a run.
    pub fn validate(&self) -> Result<(), CliError> {
        ClipSpec::new(self.frames_per_clip, self.stride)?;
        let side = perfect_square_root(self.grid_n)
            .filter(|&g| g > 0)
            .ok_or_else(|| CliError::Config(format!("grid_n {} is not a positive perfect square", self.grid_n)))?;
        init_grid(self.grid_n, CANONICAL_SIZE, CANONICAL_SIZE)?;
        self.feature_config().layout(self.frames_per_clip, side)?;
        self.lk.validate()?;
        if !(self.eps.is_finite() && self.eps >= 0.0) {
            return Err(CliError::Config(format!("eps must be finite and non-negative, got {}", self.eps)));
        }
        Ok(())
    }

    pub fn clip_spec(&self) -> ClipSpec {
        ClipSpec::new(self.frames_per_clip, self.stride).expect("validated clip spec")
    }

    pub fn feature_config(&self) -> FeatureConfig {
        FeatureConfig {
            fields: self.fields,
            hist: self.hist,
            volume: VolumeSpec { f: self.volume_f, k: self.volume_k },
            magnitude: self.magnitude,
        }
    }

    /// Per-clip feature length under this configuration.
    pub fn feature_len(&self) -> Result<usize, CliError> {
        let side = perfect_square_root(self.grid_n).unwrap_or(0);
        Ok(self.feature_config().layout(self.frames_per_clip, side)?.len())
    }
}
