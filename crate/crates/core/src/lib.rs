//! Fréchet Video Motion Distance (FVMD).
//!
//! The pipeline turns videos into per-clip keypoint trajectories, summarizes
//! the velocity and acceleration of those trajectories as orientation/magnitude
//! histograms, and compares two sets of such features with the Fréchet distance
//! between their Gaussian fits.
//!
//! All numeric stages are generic over the scalar type ([`Real`] for the
//! feature math, [`LinalgScalar`] for the covariance algebra); the aliases at
//! the bottom of this file fix the precision used by the command-line tool.

pub mod frechet;
pub mod motion;
pub mod perturb;
pub mod scalar;
pub mod synth;
pub mod tracking;
pub mod video_io;

pub use frechet::{
    fit_gaussian, frechet_distance, fvmd, sqrtm_psd, FrechetError, FvmdScore, GaussianStats,
    DEFAULT_EPS,
};
pub use motion::{
    acceleration_field, extract_feature, histogram_1d, histogram_2d, polar_decompose, quantize,
    velocity_field, FeatureConfig, FieldKind, FieldSelection, HistogramKind, MagnitudeMode,
    MotionError, MotionFeature, PolarField, QuantizedField, VectorField, VolumeSpec,
};
pub use perturb::{NoiseKind, NoiseSpec, PerturbError};
pub use scalar::{LinalgScalar, Real};
pub use tracking::{
    export_trajectories, import_trajectories, init_grid, track_builtin, ClipOrigin, LkParams,
    QueryGrid, TrackingError, TrajectorySet, TrajectorySource,
};
pub use video_io::{Clip, ClipSpec, Frame, FrameSequence, VideoIoError};

/// Library version echoed into every report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Trajectories as stored on disk and produced by the tracker.
pub type TrajectorySet32 = TrajectorySet<f32>;
/// Trajectories promoted to double precision for feature extraction.
pub type TrajectorySet64 = TrajectorySet<f64>;
pub type VectorField64 = VectorField<f64>;
pub type MotionFeature32 = MotionFeature<f32>;
pub type MotionFeature64 = MotionFeature<f64>;
pub type GaussianStats32 = GaussianStats<f32>;
pub type GaussianStats64 = GaussianStats<f64>;
pub type FvmdScore64 = FvmdScore<f64>;
