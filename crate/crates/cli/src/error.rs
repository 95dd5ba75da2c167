use std::path::PathBuf;

use fvmd_core::{FrechetError, MotionError, PerturbError, TrackingError, VideoIoError};
use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const INCOMPATIBLE: i32 = 3;
    pub const INSUFFICIENT: i32 = 4;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Input(String),
    #[error("incompatible inputs: {0}")]
    Incompatible(String),
    #[error("insufficient data: {0}")]
    Insufficient(String),
    #[error("cannot write {path}: {message}")]
    Output { path: PathBuf, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::Input(_) | CliError::Output { .. } => exit::USAGE,
            CliError::Incompatible(_) => exit::INCOMPATIBLE,
            CliError::Insufficient(_) => exit::INSUFFICIENT,
        }
    }

    pub fn output(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        CliError::Output { path: path.into(), message: err.to_string() }
    }
}

impl From<VideoIoError> for CliError {
    fn from(e: VideoIoError) -> Self {
        match e {
            VideoIoError::BadClipSpec { .. } => CliError::Config(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<TrackingError> for CliError {
    fn from(e: TrackingError) -> Self {
        match e {
            TrackingError::BadGrid(_) | TrackingError::BadParams(_) => CliError::Config(e.to_string()),
            TrackingError::WriteError { ref path, .. } => CliError::output(path.clone(), &e),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<MotionError> for CliError {
    fn from(e: MotionError) -> Self {
        match e {
            MotionError::BadVolumeSpec { .. } => CliError::Config(e.to_string()),
            MotionError::KindError { .. } => CliError::Incompatible(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<FrechetError> for CliError {
    fn from(e: FrechetError) -> Self {
        match e {
            FrechetError::TooFewSamples(_) => CliError::Insufficient(e.to_string()),
            FrechetError::DimensionMismatch(..) | FrechetError::KindMismatch(..) => CliError::Incompatible(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<PerturbError> for CliError {
    fn from(e: PerturbError) -> Self {
        match e {
            PerturbError::NotEnoughVideos { .. } => CliError::Insufficient(e.to_string()),
            PerturbError::BadIntensity { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}
