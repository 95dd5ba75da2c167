//! FVMDTRAJ: little-endian binary trajectories plus a JSON sidecar index.
//!
//! ```text
//! "FVMDTRAJ"  8 bytes
//! version     u32 = 1
//! clip_count  u32
//! F           u32
//! N           u32
//! payload     clip_count * F * N * 2 f32, frame-major, point row-major, x before y
//! ```
//!
//! The sidecar `<file>.json` maps each clip to its source video id and start frame.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ClipOrigin, TrackingError, TrajectorySet, TrajectorySource};

pub const MAGIC: &[u8; 8] = b"FVMDTRAJ";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 * 4;

#[derive(Debug, Serialize, Deserialize)]
struct SidecarIndex {
    format: String,
    version: u32,
    clips: Vec<Option<ClipOrigin>>,
}

/// Path of the JSON index written next to a trajectory file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Total file size for `clips` clips of F frames and N points.
pub fn trajectory_file_len(clips: usize, frames: usize, points: usize) -> usize {
    HEADER_LEN + clips * frames * points * 2 * 4
}

pub fn export_trajectories(sets: &[TrajectorySet<f32>], path: impl AsRef<Path>) -> Result<(), TrackingError> {
    let path = path.as_ref();
    let first = sets
        .first()
        .ok_or_else(|| TrackingError::FormatError("zero clips cannot be exported".into()))?;
    let (frames, points) = (first.frames(), first.points());
    if let Some((i, s)) = sets.iter().enumerate().find(|(_, s)| s.frames() != frames || s.points() != points) {
        return Err(TrackingError::FormatError(format!(
            "clip {i} is {}x{}, clip 0 is {frames}x{points}",
            s.frames(),
            s.points()
        )));
    }
    let as_u32 = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| TrackingError::FormatError(format!("{what} {v} exceeds u32")))
    };
    let header = [
        as_u32(VERSION as usize, "version")?,
        as_u32(sets.len(), "clip count")?,
        as_u32(frames, "frame count")?,
        as_u32(points, "point count")?,
    ];

    let write_err = |source| TrackingError::WriteError { path: path.to_path_buf(), source };
    let file = fs::File::create(path).map_err(write_err)?;
    let mut out = BufWriter::new(file);
    out.write_all(MAGIC).map_err(write_err)?;
    for v in header {
        out.write_all(&v.to_le_bytes()).map_err(write_err)?;
    }
    for set in sets {
        for v in set.coords() {
            out.write_all(&v.to_le_bytes()).map_err(write_err)?;
        }
    }
    out.flush().map_err(write_err)?;

    let index = SidecarIndex {
        format: "FVMDTRAJ".into(),
        version: VERSION,
        clips: sets.iter().map(|s| s.origin().cloned()).collect(),
    };
    let sidecar = sidecar_path(path);
    let json = serde_json::to_vec_pretty(&index).expect("sidecar index serializes");
    fs::write(&sidecar, json).map_err(|source| TrackingError::WriteError { path: sidecar, source })
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice"))
}

pub fn import_trajectories(path: impl AsRef<Path>) -> Result<Vec<TrajectorySet<f32>>, TrackingError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| TrackingError::ReadError { path: path.to_path_buf(), source })?;
    if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
        return Err(TrackingError::FormatError(format!("{} is not an FVMDTRAJ file", path.display())));
    }
    let version = read_u32(&bytes, 8);
    if version != VERSION {
        return Err(TrackingError::FormatError(format!("unsupported FVMDTRAJ version {version}")));
    }
    let clips = read_u32(&bytes, 12) as usize;
    let frames = read_u32(&bytes, 16) as usize;
    let points = read_u32(&bytes, 20) as usize;
    if clips == 0 {
        return Err(TrackingError::FormatError("header declares zero clips".into()));
    }
    let expected = clips
        .checked_mul(frames)
        .and_then(|v| v.checked_mul(points))
        .and_then(|v| v.checked_mul(8))
        .and_then(|v| v.checked_add(HEADER_LEN))
        .ok_or_else(|| TrackingError::CorruptTrajectories("header dimensions overflow".into()))?;
    if bytes.len() != expected {
        return Err(TrackingError::CorruptTrajectories(format!(
            "payload is {} bytes, header ({clips} clips, F={frames}, N={points}) needs {}",
            bytes.len() - HEADER_LEN,
            expected - HEADER_LEN
        )));
    }

    let origins = read_sidecar(path)?;
    if let Some(o) = &origins {
        if o.len() != clips {
            return Err(TrackingError::FormatError(format!(
                "sidecar lists {} clips, file holds {clips}",
                o.len()
            )));
        }
    }

    let per_clip = frames * points * 2;
    let values: Vec<f32> = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
        .collect();
    values
        .chunks_exact(per_clip)
        .enumerate()
        .map(|(i, chunk)| {
            if let Some(k) = chunk.iter().position(|v| !v.is_finite()) {
                return Err(TrackingError::CorruptTrajectories(format!(
                    "clip {i} has a non-finite value at index {k}"
                )));
            }
            let mut set = TrajectorySet::new(frames, points, chunk.to_vec(), TrajectorySource::Imported)
                .map_err(|e| match e {
                    TrackingError::BadGrid(n) => {
                        TrackingError::FormatError(format!("N={n} is not a perfect square"))
                    }
                    other => TrackingError::CorruptTrajectories(other.to_string()),
                })?;
            set.set_origin(origins.as_ref().and_then(|o| o[i].clone()));
            Ok(set)
        })
        .collect()
}

/// Clip origins from the sidecar index, if one exists next to `path`.
pub fn read_sidecar(path: &Path) -> Result<Option<Vec<Option<ClipOrigin>>>, TrackingError> {
    let sidecar = sidecar_path(path);
    if !sidecar.exists() {
        return Ok(None);
    }
    let text = fs::read(&sidecar).map_err(|source| TrackingError::ReadError { path: sidecar.clone(), source })?;
    let index: SidecarIndex = serde_json::from_slice(&text)
        .map_err(|e| TrackingError::FormatError(format!("{}: {e}", sidecar.display())))?;
    Ok(Some(index.clips))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tracking::init_grid;
    use proptest::prelude::*;

    fn sample_set(frames: usize, n: usize, salt: f32) -> TrajectorySet<f32> {
        let grid = init_grid(n, 256, 256).unwrap();
        let coords = (0..frames)
            .flat_map(|t| {
                grid.points()
                    .iter()
                    .flat_map(move |p| [p[0] as f32 + t as f32 * 0.37 + salt, p[1] as f32 - t as f32 * 1.25])
            })
            .collect();
        TrajectorySet::new(frames, n, coords, TrajectorySource::Imported)
            .unwrap()
            .with_origin(ClipOrigin { video_id: format!("v{salt}"), start_frame: 3 })
    }

    fn bits(sets: &[TrajectorySet<f32>]) -> Vec<u32> {
        sets.iter().flat_map(|s| s.coords().iter().map(|v| v.to_bits())).collect()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.fvmdtraj");
        let sets = vec![sample_set(16, 400, 0.0), sample_set(16, 400, -3.5)];
        export_trajectories(&sets, &path).unwrap();
        let back = import_trajectories(&path).unwrap();
        assert_eq!(bits(&back), bits(&sets));
        assert_eq!(back[1].origin(), sets[1].origin());
        assert!(back.iter().all(|s| s.source() == TrajectorySource::Imported));
    }

    #[test]
    fn file_size_matches_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bin");
        export_trajectories(&[sample_set(16, 400, 1.0)], &path).unwrap();
        let len = fs::metadata(&path).unwrap().len() as usize;
        assert_eq!(len, 24 + 16 * 400 * 2 * 4);
        assert_eq!(len, trajectory_file_len(1, 16, 400));
    }

    #[test]
    fn header_is_little_endian() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bin");
        export_trajectories(&[sample_set(16, 400, 1.0)], &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[..8], b"FVMDTRAJ");
        assert_eq!(&bytes[8..24], &[1, 0, 0, 0, 1, 0, 0, 0, 16, 0, 0, 0, 0x90, 1, 0, 0]);
        assert_eq!(&bytes[24..28], &(6.4f32 + 1.0).to_le_bytes());
    }

    #[test]
    fn export_rejects_empty_and_mixed_shapes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bin");
        assert!(matches!(export_trajectories(&[], &path), Err(TrackingError::FormatError(_))));
        let mixed = [sample_set(16, 400, 0.0), sample_set(16, 100, 0.0)];
        assert!(matches!(export_trajectories(&mixed, &path), Err(TrackingError::FormatError(_))));
    }

    #[test]
    fn truncated_payload_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bin");
        export_trajectories(&[sample_set(16, 400, 0.0)], &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(import_trajectories(&path), Err(TrackingError::CorruptTrajectories(_))));
    }

    #[test]
    fn bad_magic_and_version_are_format_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bin");
        export_trajectories(&[sample_set(4, 4, 0.0)], &path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes[8] = 2;
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(import_trajectories(&path), Err(TrackingError::FormatError(_))));
        bytes[8] = 1;
        bytes[0] = b'X';
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(import_trajectories(&path), Err(TrackingError::FormatError(_))));
    }

    #[test]
    fn non_finite_values_are_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bin");
        export_trajectories(&[sample_set(4, 4, 0.0)], &path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes[24 + 12..24 + 16].copy_from_slice(&f32::NAN.to_le_bytes());
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(import_trajectories(&path), Err(TrackingError::CorruptTrajectories(_))));
    }

    #[test]
    fn imports_without_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bin");
        export_trajectories(&[sample_set(4, 9, 0.0)], &path).unwrap();
        fs::remove_file(sidecar_path(&path)).unwrap();
        let back = import_trajectories(&path).unwrap();
        assert_eq!(back.len(), 1);
        assert!(back[0].origin().is_none());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn arbitrary_finite_coords_round_trip(
            raw in proptest::collection::vec(-1e6f32..1e6, 2 * 9 * 2 * 3),
        ) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("p.bin");
            let sets: Vec<_> = raw
                .chunks(2 * 9 * 2)
                .map(|c| TrajectorySet::new(2, 9, c.to_vec(), TrajectorySource::BuiltinLk).unwrap())
                .collect();
            export_trajectories(&sets, &path).unwrap();
            let back = import_trajectories(&path).unwrap();
            prop_assert_eq!(bits(&back), bits(&sets));
        }
    }
}
