//! FVMDFEAT: a row-major float32 matrix, one clip feature per row.
//!
//! Header: magic "FVMDFEAT", version u32 = 1, rows u32, cols u32 (little-endian).

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{MotionError, MotionFeature};
use crate::scalar::Real;

const MAGIC: &[u8; 8] = b"FVMDFEAT";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 20;

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f32>,
}

impl FeatureMatrix {
    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }
}

pub fn write_features<T: Real>(features: &[MotionFeature<T>], path: impl AsRef<Path>) -> Result<(), MotionError> {
    let path = path.as_ref();
    let cols = features.first().map(|f| f.len()).unwrap_or(0);
    if features.iter().any(|f| f.len() != cols) {
        return Err(MotionError::FormatError("features have different lengths".into()));
    }
    let io_err = |source| MotionError::Io { path: path.to_path_buf(), source };
    let mut out = BufWriter::new(fs::File::create(path).map_err(io_err)?);
    out.write_all(MAGIC).map_err(io_err)?;
    for v in [VERSION, features.len() as u32, cols as u32] {
        out.write_all(&v.to_le_bytes()).map_err(io_err)?;
    }
    for f in features {
        for v in f.data() {
            out.write_all(&(v.as_f64() as f32).to_le_bytes()).map_err(io_err)?;
        }
    }
    out.flush().map_err(io_err)
}

pub fn read_features(path: impl AsRef<Path>) -> Result<FeatureMatrix, MotionError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| MotionError::Io { path: path.to_path_buf(), source })?;
    if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
        return Err(MotionError::FormatError("missing FVMDFEAT magic".into()));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as usize;
    if word(8) != VERSION as usize {
        return Err(MotionError::FormatError(format!("unsupported version {}", word(8))));
    }
    let (rows, cols) = (word(12), word(16));
    if bytes.len() != HEADER_LEN + rows * cols * 4 {
        return Err(MotionError::FormatError(format!("payload does not hold {rows}x{cols} values")));
    }
    let values = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok(FeatureMatrix { rows, cols, values })
}
