//! Motion features from keypoint trajectories.
//!
//! Trajectories are differenced into velocity and acceleration fields (frame 0
//! zero-padded), each vector is split into a clipped magnitude and a
//! full-circle angle, both are quantized (9 log2 magnitude bins, 8 angle bins
//! of 45 degrees), and the quantized vectors are pooled over f x k x k
//! spatio-temporal volumes of the query grid into either a 72-bin joint count
//! histogram (`hist2d`) or an 8-bin magnitude-weighted angle histogram
//! (`hist1d`).

mod featfile;

use std::f64::consts::{FRAC_PI_4, TAU};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;
use crate::tracking::TrajectorySet;

pub use featfile::{read_features, write_features, FeatureMatrix};

/// Magnitudes are clipped to this value before quantization.
pub const MAX_MAGNITUDE: f64 = 255.0;
pub const MAGNITUDE_BINS: usize = 9;
pub const ANGLE_BINS: usize = 8;
pub const JOINT_BINS: usize = MAGNITUDE_BINS * ANGLE_BINS;

#[derive(Debug, Error)]
pub enum MotionError {
    #[error("expected a {expected} field, got {found}")]
    KindError { expected: FieldKind, found: FieldKind },
    #[error("volume {f}x{k}x{k} does not tile {frames} frames on a {grid_side}x{grid_side} grid")]
    BadVolumeSpec { f: usize, k: usize, frames: usize, grid_side: usize },
    #[error("feature file error: {0}")]
    FormatError(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Velocity,
    Acceleration,
}

impl fmt::Display for FieldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FieldKind::Velocity => "velocity",
            FieldKind::Acceleration => "acceleration",
        })
    }
}

/// Per-frame, per-point 2D vectors (F x N x 2) with frame 0 all zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField<T> {
    frames: usize,
    points: usize,
    grid_side: usize,
    values: Vec<T>,
    kind: FieldKind,
}

impl<T: Real> VectorField<T> {
    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn grid_side(&self) -> usize {
        self.grid_side
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn vector(&self, frame: usize, index: usize) -> [T; 2] {
        let o = (frame * self.points + index) * 2;
        [self.values[o], self.values[o + 1]]
    }
}

/// Zero frame followed by consecutive frame differences of `values` (F x N x 2).
fn padded_difference<T: Real>(values: &[T], frames: usize, points: usize) -> Vec<T> {
    let stride = points * 2;
    let mut out = vec![T::zero(); frames * stride];
    for t in 1..frames {
        let (cur, prev) = (&values[t * stride..(t + 1) * stride], &values[(t - 1) * stride..t * stride]);
        for ((o, &c), &p) in out[t * stride..(t + 1) * stride].iter_mut().zip(cur).zip(prev) {
            *o = c - p;
        }
    }
    out
}

/// V[0] = 0, V[t] = Y[t] - Y[t-1].
pub fn velocity_field<T: Real>(traj: &TrajectorySet<T>) -> VectorField<T> {
    VectorField {
        frames: traj.frames(),
        points: traj.points(),
        grid_side: traj.grid_side(),
        values: padded_difference(traj.coords(), traj.frames(), traj.points()),
        kind: FieldKind::Velocity,
    }
}

/// A[0] = 0, A[t] = V[t] - V[t-1]; A[1] equals V[1] because V[0] is padding.
pub fn acceleration_field<T: Real>(vel: &VectorField<T>) -> Result<VectorField<T>, MotionError> {
    if vel.kind != FieldKind::Velocity {
        return Err(MotionError::KindError { expected: FieldKind::Velocity, found: vel.kind });
    }
    Ok(VectorField {
        frames: vel.frames,
        points: vel.points,
        grid_side: vel.grid_side,
        values: padded_difference(&vel.values, vel.frames, vel.points),
        kind: FieldKind::Acceleration,
    })
}

/// Clipped magnitudes in [0, 255] and angles in [0, 2π), F x N each.
#[derive(Clone, Debug, PartialEq)]
pub struct PolarField<T> {
    kind: FieldKind,
    frames: usize,
    points: usize,
    grid_side: usize,
    magnitudes: Vec<T>,
    angles: Vec<T>,
}

impl<T: Real> PolarField<T> {
    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn magnitudes(&self) -> &[T] {
        &self.magnitudes
    }

    pub fn angles(&self) -> &[T] {
        &self.angles
    }
}

/// Clipped l2 magnitude and four-quadrant angle of one vector.
pub fn polar<T: Real>(v: [T; 2]) -> (T, T) {
    let rho = v[0].hypot(v[1]);
    if rho == T::zero() {
        return (T::zero(), T::zero());
    }
    let mut phi = v[1].atan2(v[0]);
    if phi < T::zero() {
        phi = phi + T::lit(TAU);
    }
    // A tiny negative angle can round up to exactly 2π.
    if phi >= T::lit(TAU) {
        phi = T::zero();
    }
    (rho.min(T::lit(MAX_MAGNITUDE)), phi)
}

pub fn polar_decompose<T: Real>(field: &VectorField<T>) -> PolarField<T> {
    let (magnitudes, angles) = field.values.chunks_exact(2).map(|v| polar([v[0], v[1]])).unzip();
    PolarField {
        kind: field.kind,
        frames: field.frames,
        points: field.points,
        grid_side: field.grid_side,
        magnitudes,
        angles,
    }
}

/// round(log2(1 + ρ)), half away from zero; 0..=8 for ρ in [0, 255].
pub fn magnitude_bin<T: Real>(rho: T) -> u8 {
    let b = (T::one() + rho).log2().round();
    b.to_u8().unwrap_or(0).min((MAGNITUDE_BINS - 1) as u8)
}

/// ⌊φ / 45°⌋ mod 8.
pub fn angle_bin<T: Real>(phi: T) -> u8 {
    let b = (phi / T::lit(FRAC_PI_4)).floor().to_i64().unwrap_or(0);
    b.rem_euclid(ANGLE_BINS as i64) as u8
}

/// Per-vector magnitude and angle bins. The clipped magnitudes are kept for
/// the raw-magnitude variant of the 1D histogram.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedField<T> {
    kind: FieldKind,
    frames: usize,
    points: usize,
    grid_side: usize,
    mag_bins: Vec<u8>,
    angle_bins: Vec<u8>,
    magnitudes: Vec<T>,
}

impl<T: Real> QuantizedField<T> {
    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn mag_bins(&self) -> &[u8] {
        &self.mag_bins
    }

    pub fn angle_bins(&self) -> &[u8] {
        &self.angle_bins
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn grid_side(&self) -> usize {
        self.grid_side
    }

    /// Builds a field directly from bins, with magnitudes taken as 2^bin - 1.
    pub fn from_bins(
        kind: FieldKind,
        frames: usize,
        grid_side: usize,
        mag_bins: Vec<u8>,
        angle_bins: Vec<u8>,
    ) -> Option<Self> {
        let points = grid_side * grid_side;
        let ok = mag_bins.len() == frames * points
            && angle_bins.len() == frames * points
            && mag_bins.iter().all(|&b| (b as usize) < MAGNITUDE_BINS)
            && angle_bins.iter().all(|&b| (b as usize) < ANGLE_BINS);
        ok.then(|| {
            let magnitudes = mag_bins.iter().map(|&b| T::lit(2f64.powi(b as i32) - 1.0)).collect();
            Self { kind, frames, points, grid_side, mag_bins, angle_bins, magnitudes }
        })
    }
}

pub fn quantize<T: Real>(polar: &PolarField<T>) -> QuantizedField<T> {
    QuantizedField {
        kind: polar.kind,
        frames: polar.frames,
        points: polar.points,
        grid_side: polar.grid_side,
        mag_bins: polar.magnitudes.iter().map(|&m| magnitude_bin(m)).collect(),
        angle_bins: polar.angles.iter().map(|&a| angle_bin(a)).collect(),
        magnitudes: polar.magnitudes.clone(),
    }
}

/// Volume extent: `f` frames by `k` x `k` grid points.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VolumeSpec {
    pub f: usize,
    pub k: usize,
}

impl Default for VolumeSpec {
    fn default() -> Self {
        Self { f: 4, k: 5 }
    }
}

impl VolumeSpec {
    pub fn check(&self, frames: usize, grid_side: usize) -> Result<(), MotionError> {
        let tiles = self.f > 0 && self.k > 0 && frames % self.f == 0 && grid_side % self.k == 0;
        if tiles {
            Ok(())
        } else {
            Err(MotionError::BadVolumeSpec { f: self.f, k: self.k, frames, grid_side })
        }
    }

    /// Volume index of (frame, point) on a row-major `grid_side` grid.
    #[inline]
    fn volume_of(&self, frame: usize, point: usize, grid_side: usize) -> usize {
        let blocks = grid_side / self.k;
        let (row, col) = (point / grid_side, point % grid_side);
        ((frame / self.f) * blocks + row / self.k) * blocks + col / self.k
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HistogramKind {
    #[serde(rename = "1d")]
    Hist1d,
    #[serde(rename = "2d")]
    Hist2d,
}

impl HistogramKind {
    pub fn bins(&self) -> usize {
        match self {
            HistogramKind::Hist1d => ANGLE_BINS,
            HistogramKind::Hist2d => JOINT_BINS,
        }
    }
}

impl fmt::Display for HistogramKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HistogramKind::Hist1d => "1d",
            HistogramKind::Hist2d => "2d",
        })
    }
}

impl FromStr for HistogramKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "1d" => Ok(HistogramKind::Hist1d),
            "2d" => Ok(HistogramKind::Hist2d),
            other => Err(format!("unknown histogram type `{other}` (expected 1d or 2d)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldSelection {
    Velocity,
    Acceleration,
    Combined,
}

impl From<FieldKind> for FieldSelection {
    fn from(kind: FieldKind) -> Self {
        match kind {
            FieldKind::Velocity => FieldSelection::Velocity,
            FieldKind::Acceleration => FieldSelection::Acceleration,
        }
    }
}

impl FieldSelection {
    fn field_count(&self) -> usize {
        match self {
            FieldSelection::Combined => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for FieldSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FieldSelection::Velocity => "velocity",
            FieldSelection::Acceleration => "acceleration",
            FieldSelection::Combined => "combined",
        })
    }
}

impl FromStr for FieldSelection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "velocity" => Ok(FieldSelection::Velocity),
            "acceleration" => Ok(FieldSelection::Acceleration),
            "combined" => Ok(FieldSelection::Combined),
            other => Err(format!("unknown field selection `{other}`")),
        }
    }
}

/// What the 1D histogram accumulates per vector.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MagnitudeMode {
    /// The magnitude bin (0..=8).
    #[default]
    Quantized,
    /// The clipped magnitude itself.
    Raw,
}

/// Shape of a flattened feature: `fields` blocks of T' x G' x G' x B.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub temporal: usize,
    pub spatial: usize,
    pub bins: usize,
    pub fields: usize,
}

impl FeatureLayout {
    pub fn len(&self) -> usize {
        self.fields * self.temporal * self.spatial * self.spatial * self.bins
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Feature recipe; the default is the combined velocity+acceleration 1D histogram on 4x5x5 volumes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub fields: FieldSelection,
    pub hist: HistogramKind,
    pub volume: VolumeSpec,
    #[serde(default)]
    pub magnitude: MagnitudeMode,
}

impl Default for FieldSelection {
    fn default() -> Self {
        FieldSelection::Combined
    }
}

impl Default for HistogramKind {
    fn default() -> Self {
        HistogramKind::Hist1d
    }
}

impl FeatureConfig {
    /// Feature length for clips of `frames` frames on a `grid_side` grid.
    pub fn layout(&self, frames: usize, grid_side: usize) -> Result<FeatureLayout, MotionError> {
        self.volume.check(frames, grid_side)?;
        Ok(FeatureLayout {
            temporal: frames / self.volume.f,
            spatial: grid_side / self.volume.k,
            bins: self.hist.bins(),
            fields: self.fields.field_count(),
        })
    }
}

/// Flattened histogram feature of one clip. All entries are non-negative.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionFeature<T> {
    data: Vec<T>,
    layout: FeatureLayout,
    fields: FieldSelection,
    hist: HistogramKind,
}

impl<T: Real> MotionFeature<T> {
    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn layout(&self) -> FeatureLayout {
        self.layout
    }

    pub fn fields(&self) -> FieldSelection {
        self.fields
    }

    pub fn hist(&self) -> HistogramKind {
        self.hist
    }

    /// The histogram of one volume (within the first field block).
    pub fn volume(&self, index: usize) -> &[T] {
        let b = self.layout.bins;
        &self.data[index * b..(index + 1) * b]
    }

    pub fn cast<U: Real>(&self) -> MotionFeature<U> {
        MotionFeature {
            data: self.data.iter().map(|&v| crate::scalar::cast(v)).collect(),
            layout: self.layout,
            fields: self.fields,
            hist: self.hist,
        }
    }
}

fn single_field_layout<T: Real>(
    q: &QuantizedField<T>,
    spec: VolumeSpec,
    hist: HistogramKind,
) -> Result<FeatureLayout, MotionError> {
    spec.check(q.frames, q.grid_side)?;
    Ok(FeatureLayout {
        temporal: q.frames / spec.f,
        spatial: q.grid_side / spec.k,
        bins: hist.bins(),
        fields: 1,
    })
}

/// 72-bin (angle-major, then magnitude) count histogram per volume.
pub fn histogram_2d<T: Real>(q: &QuantizedField<T>, spec: VolumeSpec) -> Result<MotionFeature<T>, MotionError> {
    let layout = single_field_layout(q, spec, HistogramKind::Hist2d)?;
    let mut counts = vec![0u32; layout.len()];
    for t in 0..q.frames {
        for j in 0..q.points {
            let i = t * q.points + j;
            let bin = q.angle_bins[i] as usize * MAGNITUDE_BINS + q.mag_bins[i] as usize;
            counts[spec.volume_of(t, j, q.grid_side) * JOINT_BINS + bin] += 1;
        }
    }
    Ok(MotionFeature {
        data: counts.into_iter().map(|c| T::from_count(c as usize)).collect(),
        layout,
        fields: q.kind.into(),
        hist: HistogramKind::Hist2d,
    })
}

/// 8-bin angle histogram per volume, each vector adding its quantized magnitude.
pub fn histogram_1d<T: Real>(q: &QuantizedField<T>, spec: VolumeSpec) -> Result<MotionFeature<T>, MotionError> {
    histogram_1d_with(q, spec, MagnitudeMode::Quantized)
}

pub fn histogram_1d_with<T: Real>(
    q: &QuantizedField<T>,
    spec: VolumeSpec,
    mode: MagnitudeMode,
) -> Result<MotionFeature<T>, MotionError> {
    let layout = single_field_layout(q, spec, HistogramKind::Hist1d)?;
    let mut data = vec![T::zero(); layout.len()];
    for t in 0..q.frames {
        for j in 0..q.points {
            let i = t * q.points + j;
            let weight = match mode {
                MagnitudeMode::Quantized => T::from_count(q.mag_bins[i] as usize),
                MagnitudeMode::Raw => q.magnitudes[i],
            };
            let slot = spec.volume_of(t, j, q.grid_side) * ANGLE_BINS + q.angle_bins[i] as usize;
            data[slot] = data[slot] + weight;
        }
    }
    Ok(MotionFeature { data, layout, fields: q.kind.into(), hist: HistogramKind::Hist1d })
}

fn field_feature<T: Real>(field: &VectorField<T>, config: &FeatureConfig) -> Result<MotionFeature<T>, MotionError> {
    let q = quantize(&polar_decompose(field));
    match config.hist {
        HistogramKind::Hist1d => histogram_1d_with(&q, config.volume, config.magnitude),
        HistogramKind::Hist2d => histogram_2d(&q, config.volume),
    }
}

/// Full feature of one clip; `combined` places the velocity block before the acceleration block.
pub fn extract_feature<T: Real>(
    traj: &TrajectorySet<T>,
    config: &FeatureConfig,
) -> Result<MotionFeature<T>, MotionError> {
    let layout = config.layout(traj.frames(), traj.grid_side())?;
    let vel = velocity_field(traj);
    let data = match config.fields {
        FieldSelection::Velocity => field_feature(&vel, config)?.data,
        FieldSelection::Acceleration => field_feature(&acceleration_field(&vel)?, config)?.data,
        FieldSelection::Combined => {
            let acc = acceleration_field(&vel)?;
            let mut data = field_feature(&vel, config)?.data;
            data.extend(field_feature(&acc, config)?.data);
            data
        }
    };
    debug_assert_eq!(data.len(), layout.len());
    Ok(MotionFeature { data, layout, fields: config.fields, hist: config.hist })
}
