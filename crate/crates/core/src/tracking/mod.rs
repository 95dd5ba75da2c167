//! Per-clip keypoint trajectories: grid queries, the built-in pyramidal
//! Lucas-Kanade tracker, and the FVMDTRAJ import/export format used to bring
//! in trajectories from an external tracker.

mod lk;
mod trajfile;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{cast, Real};

pub use lk::{track_builtin, LkParams};
pub use trajfile::{
    export_trajectories, import_trajectories, read_sidecar, sidecar_path, trajectory_file_len, MAGIC,
    VERSION,
};

#[derive(Debug, Error)]
pub enum TrackingError {
    #[error("grid size {0} is not a positive perfect square")]
    BadGrid(usize),
    #[error("invalid grid frame {width}x{height}")]
    BadFrameSize { width: u32, height: u32 },
    #[error("invalid tracker parameters: {0}")]
    BadParams(String),
    #[error("invalid trajectory shape: {0}")]
    BadShape(String),
    #[error("trajectory file format error: {0}")]
    FormatError(String),
    #[error("corrupt trajectories: {0}")]
    CorruptTrajectories(String),
    #[error("cannot read {path}: {source}")]
    ReadError {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    WriteError {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// N query points at the cell centers of a g x g partition of the first frame.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryGrid {
    side: usize,
    width: u32,
    height: u32,
    points: Vec<[f64; 2]>,
}

impl QueryGrid {
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Row-major (x, y) pixel coordinates.
    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }
}

/// Exact integer square root, if `n` is a perfect square.
pub fn perfect_square_root(n: usize) -> Option<usize> {
    let r = (n as f64).sqrt().round() as usize;
    (r * r == n).then_some(r)
}

/// Places `n` points at cell centers: x_i = (i + 0.5) * width / g, y_j likewise, row-major.
pub fn init_grid(n: usize, width: u32, height: u32) -> Result<QueryGrid, TrackingError> {
    let side = perfect_square_root(n).filter(|&g| g > 0).ok_or(TrackingError::BadGrid(n))?;
    if width == 0 || height == 0 {
        return Err(TrackingError::BadFrameSize { width, height });
    }
    let (w, h, g) = (width as f64, height as f64, side as f64);
    let points = (0..side)
        .flat_map(|j| (0..side).map(move |i| [(i as f64 + 0.5) * w / g, (j as f64 + 0.5) * h / g]))
        .collect();
    Ok(QueryGrid { side, width, height, points })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectorySource {
    Imported,
    BuiltinLk,
}

impl TrajectorySource {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrajectorySource::Imported => "imported",
            TrajectorySource::BuiltinLk => "builtin_lk",
        }
    }
}

/// Which video and frame offset a clip's trajectories were computed from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipOrigin {
    pub video_id: String,
    pub start_frame: usize,
}

/// F x N x 2 pixel coordinates, frame-major, then point, then (x, y).
///
/// Coordinates may leave the frame bounds; they are always finite.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectorySet<T> {
    frames: usize,
    points: usize,
    grid_side: usize,
    coords: Vec<T>,
    source: TrajectorySource,
    origin: Option<ClipOrigin>,
}

impl<T: Real> TrajectorySet<T> {
    pub fn new(
        frames: usize,
        points: usize,
        coords: Vec<T>,
        source: TrajectorySource,
    ) -> Result<Self, TrackingError> {
        let grid_side = perfect_square_root(points)
            .filter(|&g| g > 0)
            .ok_or(TrackingError::BadGrid(points))?;
        if frames < 2 {
            return Err(TrackingError::BadShape(format!("{frames} frames, need at least 2")));
        }
        if coords.len() != frames * points * 2 {
            return Err(TrackingError::BadShape(format!(
                "{} values for {frames}x{points}x2",
                coords.len()
            )));
        }
        if let Some(i) = coords.iter().position(|v| !v.is_finite()) {
            return Err(TrackingError::BadShape(format!("non-finite coordinate at flat index {i}")));
        }
        Ok(Self { frames, points, grid_side, coords, source, origin: None })
    }

    /// Trajectories that never move from the grid positions.
    pub fn stationary(grid: &QueryGrid, frames: usize) -> Result<Self, TrackingError> {
        let first: Vec<T> = grid.points.iter().flat_map(|p| [T::lit(p[0]), T::lit(p[1])]).collect();
        let coords = first.iter().copied().cycle().take(first.len() * frames).collect();
        Self::new(frames, grid.len(), coords, TrajectorySource::BuiltinLk)
    }

    pub fn with_origin(mut self, origin: ClipOrigin) -> Self {
        self.origin = Some(origin);
        self
    }

    pub(crate) fn set_origin(&mut self, origin: Option<ClipOrigin>) {
        self.origin = origin;
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

    pub fn coords(&self) -> &[T] {
        &self.coords
    }

    pub fn source(&self) -> TrajectorySource {
        self.source
    }

    pub fn origin(&self) -> Option<&ClipOrigin> {
        self.origin.as_ref()
    }

    pub fn point(&self, frame: usize, index: usize) -> [T; 2] {
        let o = (frame * self.points + index) * 2;
        [self.coords[o], self.coords[o + 1]]
    }

    /// Coordinates of one frame as flat (x, y) pairs.
    pub fn frame(&self, frame: usize) -> &[T] {
        let n = self.points * 2;
        &self.coords[frame * n..(frame + 1) * n]
    }

    /// Converts to another scalar type.
    pub fn cast<U: Real>(&self) -> TrajectorySet<U> {
        TrajectorySet {
            frames: self.frames,
            points: self.points,
            grid_side: self.grid_side,
            coords: self.coords.iter().map(|&v| cast(v)).collect(),
            source: self.source,
            origin: self.origin.clone(),
        }
    }

    /// Applies `f` to every (x, y) coordinate pair; the result must stay finite.
    pub fn map_points(&self, mut f: impl FnMut(usize, usize, [T; 2]) -> [T; 2]) -> Result<Self, TrackingError> {
        let mut coords = Vec::with_capacity(self.coords.len());
        for t in 0..self.frames {
            for j in 0..self.points {
                let p = f(t, j, self.point(t, j));
                coords.extend_from_slice(&p);
            }
        }
        let mut out = Self::new(self.frames, self.points, coords, self.source)?;
        out.origin = self.origin.clone();
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_of_400_on_256() {
        let g = init_grid(400, 256, 256).unwrap();
        assert_eq!(g.side(), 20);
        assert_eq!(g.len(), 400);
        assert_eq!(g.points()[0], [6.4, 6.4]);
        assert_eq!(g.points()[1], [19.2, 6.4]);
        assert_eq!(g.points()[20], [6.4, 19.2]);
    }

    #[test]
    fn grid_of_4_on_256() {
        let g = init_grid(4, 256, 256).unwrap();
        assert_eq!(g.points(), &[[64.0, 64.0], [192.0, 64.0], [64.0, 192.0], [192.0, 192.0]]);
    }

    #[test]
    fn non_square_grid_is_rejected() {
        assert!(matches!(init_grid(10, 256, 256), Err(TrackingError::BadGrid(10))));
        assert!(matches!(init_grid(0, 256, 256), Err(TrackingError::BadGrid(0))));
    }

    #[test]
    fn grid_points_are_inside_frame() {
        for n in [1usize, 4, 9, 400, 1024] {
            let g = init_grid(n, 200, 120).unwrap();
            assert!(g.points().iter().all(|p| p[0] > 0.0 && p[0] < 200.0 && p[1] > 0.0 && p[1] < 120.0));
        }
    }

    #[test]
    fn trajectory_shape_is_validated() {
        assert!(TrajectorySet::<f64>::new(2, 4, vec![0.0; 16], TrajectorySource::Imported).is_ok());
        assert!(TrajectorySet::<f64>::new(2, 4, vec![0.0; 15], TrajectorySource::Imported).is_err());
        assert!(TrajectorySet::<f64>::new(1, 4, vec![0.0; 8], TrajectorySource::Imported).is_err());
        assert!(TrajectorySet::<f64>::new(2, 5, vec![0.0; 20], TrajectorySource::Imported).is_err());
        let mut bad = vec![0.0; 16];
        bad[3] = f64::INFINITY;
        assert!(TrajectorySet::<f64>::new(2, 4, bad, TrajectorySource::Imported).is_err());
    }

    #[test]
    fn stationary_starts_at_grid() {
        let g = init_grid(400, 256, 256).unwrap();
        let t = TrajectorySet::<f32>::stationary(&g, 16).unwrap();
        for j in 0..400 {
            let p = g.points()[j];
            assert_eq!(t.point(0, j), [p[0] as f32, p[1] as f32]);
            assert_eq!(t.point(15, j), t.point(0, j));
        }
    }
}
