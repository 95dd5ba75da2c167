//! Frame-directory ingestion, resizing to the canonical resolution and
//! fixed-length clip segmentation.
//!
//! A video is a directory of PNG/PPM/PGM frames whose lexicographic file-name
//! order is the temporal order. A video set is a directory of such directories.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use image::{DynamicImage, ImageFormat};
use thiserror::Error;

/// Side length every frame is resized to before tracking.
pub const CANONICAL_SIZE: u32 = 256;

const FRAME_EXTENSIONS: &[&str] = &["png", "ppm", "pgm", "pnm"];

#[derive(Debug, Error)]
pub enum VideoIoError {
    #[error("no frames found in {0}")]
    NoFrames(PathBuf),
    #[error("frame {path} is {found_w}x{found_h}x{found_c}, expected {want_w}x{want_h}x{want_c}")]
    InconsistentFrames {
        path: PathBuf,
        want_w: u32,
        want_h: u32,
        want_c: u8,
        found_w: u32,
        found_h: u32,
        found_c: u8,
    },
    #[error("cannot decode {path}: {source}")]
    DecodeError {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("video `{id}` has {len} frames, a clip needs {need}")]
    TooShort { id: String, len: usize, need: usize },
    #[error("invalid clip spec: frames_per_clip={frames_per_clip}, stride={stride}")]
    BadClipSpec { frames_per_clip: usize, stride: usize },
    #[error("invalid frame: {0}")]
    BadFrame(String),
    #[error("cannot encode {path}: {source}")]
    EncodeError {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// One 8-bit raster frame, 1 (gray) or 3 (RGB) interleaved channels.
///
/// Pixel storage is reference counted so reordering frames (perturbations,
/// clip segmentation) never copies pixel data.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    width: u32,
    height: u32,
    channels: u8,
    data: Arc<[u8]>,
}

impl Frame {
    pub fn new(width: u32, height: u32, channels: u8, data: Vec<u8>) -> Result<Self, VideoIoError> {
        if width == 0 || height == 0 {
            return Err(VideoIoError::BadFrame(format!("empty frame {width}x{height}")));
        }
        if channels != 1 && channels != 3 {
            return Err(VideoIoError::BadFrame(format!("{channels} channels")));
        }
        let expected = width as usize * height as usize * channels as usize;
        if data.len() != expected {
            return Err(VideoIoError::BadFrame(format!(
                "buffer holds {} bytes, {width}x{height}x{channels} needs {expected}",
                data.len()
            )));
        }
        Ok(Self { width, height, channels, data: data.into() })
    }

    pub fn filled(width: u32, height: u32, channels: u8, value: u8) -> Result<Self, VideoIoError> {
        Self::new(width, height, channels, vec![value; width as usize * height as usize * channels as usize])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    /// True when both frames share the same pixel buffer allocation.
    pub fn shares_buffer(&self, other: &Frame) -> bool {
        Arc::ptr_eq(&self.data, &other.data)
    }

    fn same_shape(&self, other: &Frame) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    /// Bilinear resize with half-pixel (non corner-aligned) sampling; each
    /// output byte is the rounded interpolated value.
    pub fn resize_bilinear(&self, out_w: u32, out_h: u32) -> Frame {
        if out_w == self.width && out_h == self.height {
            return self.clone();
        }
        let c = self.channels as usize;
        let (sw, sh) = (self.width as usize, self.height as usize);
        let taps_x = bilinear_taps(sw, out_w as usize);
        let taps_y = bilinear_taps(sh, out_h as usize);
        let mut out = Vec::with_capacity(out_w as usize * out_h as usize * c);
        for &(y0, y1, wy) in &taps_y {
            for &(x0, x1, wx) in &taps_x {
                for ch in 0..c {
                    let px = |x: usize, y: usize| self.data[(y * sw + x) * c + ch] as f64;
                    let top = px(x0, y0) * (1.0 - wx) + px(x1, y0) * wx;
                    let bottom = px(x0, y1) * (1.0 - wx) + px(x1, y1) * wx;
                    let v = top * (1.0 - wy) + bottom * wy;
                    out.push(v.round().clamp(0.0, 255.0) as u8);
                }
            }
        }
        Frame { width: out_w, height: out_h, channels: self.channels, data: out.into() }
    }

    /// Rec.601 luma, rounded to the nearest integer. Gray frames are returned as is.
    pub fn to_gray(&self) -> Frame {
        if self.channels == 1 {
            return self.clone();
        }
        let data: Vec<u8> = self
            .data
            .chunks_exact(3)
            .map(|p| {
                let y = 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64;
                y.round().clamp(0.0, 255.0) as u8
            })
            .collect();
        Frame { width: self.width, height: self.height, channels: 1, data: data.into() }
    }

    fn from_dynamic(img: DynamicImage) -> Frame {
        let (data, w, h, c) = if img.color().has_color() {
            let rgb = img.to_rgb8();
            let (w, h) = rgb.dimensions();
            (rgb.into_raw(), w, h, 3)
        } else {
            let gray = img.to_luma8();
            let (w, h) = gray.dimensions();
            (gray.into_raw(), w, h, 1)
        };
        Frame { width: w, height: h, channels: c, data: data.into() }
    }
}

/// For each output coordinate: (low index, high index, weight of high index).
fn bilinear_taps(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let s = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let lo = s.floor() as usize;
            let hi = (lo + 1).min(src - 1);
            (lo, hi, s - lo as f64)
        })
        .collect()
}

/// A decoded video: ordered frames of identical shape.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrameSequence {
    id: String,
    frames: Vec<Frame>,
}

impl FrameSequence {
    pub fn new(id: impl Into<String>, frames: Vec<Frame>) -> Result<Self, VideoIoError> {
        let id = id.into();
        let first = frames.first().ok_or_else(|| VideoIoError::NoFrames(PathBuf::from(&id)))?;
        if let Some((i, bad)) = frames.iter().enumerate().find(|(_, f)| !f.same_shape(first)) {
            return Err(inconsistent(PathBuf::from(format!("{id}[{i}]")), first, bad));
        }
        Ok(Self { id, frames })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<Frame> {
        self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> u32 {
        self.frames[0].width
    }

    pub fn height(&self) -> u32 {
        self.frames[0].height
    }

    pub fn channels(&self) -> u8 {
        self.frames[0].channels
    }

    /// Same frames under a new id.
    pub fn with_id(self, id: impl Into<String>) -> Self {
        Self { id: id.into(), frames: self.frames }
    }
}

fn inconsistent(path: PathBuf, want: &Frame, found: &Frame) -> VideoIoError {
    VideoIoError::InconsistentFrames {
        path,
        want_w: want.width,
        want_h: want.height,
        want_c: want.channels,
        found_w: found.width,
        found_h: found.height,
        found_c: found.channels,
    }
}

fn is_frame_file(path: &Path) -> bool {
    path.is_file()
        && path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| FRAME_EXTENSIONS.iter().any(|x| e.eq_ignore_ascii_case(x)))
}

/// Decodes every frame file of `dir` in file-name order.
pub fn load_frames(dir: impl AsRef<Path>) -> Result<FrameSequence, VideoIoError> {
    let dir = dir.as_ref();
    let io_err = |source| VideoIoError::Io { path: dir.to_path_buf(), source };
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(io_err)?;
    paths.retain(|p| is_frame_file(p));
    paths.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    if paths.is_empty() {
        return Err(VideoIoError::NoFrames(dir.to_path_buf()));
    }

    let mut frames: Vec<Frame> = Vec::with_capacity(paths.len());
    for path in &paths {
        let img = image::open(path)
            .map_err(|source| VideoIoError::DecodeError { path: path.clone(), source })?;
        let frame = Frame::from_dynamic(img);
        if let Some(first) = frames.first() {
            if !first.same_shape(&frame) {
                return Err(inconsistent(path.clone(), first, &frame));
            }
        }
        frames.push(frame);
    }
    let id = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(FrameSequence { id, frames })
}

/// Writes frames as `00000.png`, `00001.png`, ... into `dir` (created if missing).
pub fn save_frames(seq: &FrameSequence, dir: impl AsRef<Path>) -> Result<(), VideoIoError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|source| VideoIoError::Io { path: dir.to_path_buf(), source })?;
    for (i, frame) in seq.frames.iter().enumerate() {
        let path = dir.join(format!("{i:05}.png"));
        let color = if frame.channels == 1 {
            image::ExtendedColorType::L8
        } else {
            image::ExtendedColorType::Rgb8
        };
        image::save_buffer_with_format(&path, &frame.data, frame.width, frame.height, color, ImageFormat::Png)
            .map_err(|source| VideoIoError::EncodeError { path: path.clone(), source })?;
    }
    Ok(())
}

/// Subdirectories of a video-set directory, sorted by name.
pub fn list_videos(set_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>, VideoIoError> {
    let set_dir = set_dir.as_ref();
    let io_err = |source| VideoIoError::Io { path: set_dir.to_path_buf(), source };
    let mut dirs: Vec<PathBuf> = fs::read_dir(set_dir)
        .map_err(io_err)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(io_err)?;
    dirs.retain(|p| p.is_dir());
    dirs.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(dirs)
}

/// Resizes every frame to 256x256.
pub fn preprocess(seq: &FrameSequence) -> FrameSequence {
    let frames = seq
        .frames
        .iter()
        .map(|f| f.resize_bilinear(CANONICAL_SIZE, CANONICAL_SIZE))
        .collect();
    FrameSequence { id: seq.id.clone(), frames }
}

/// Clip length and the step between consecutive clip starts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ClipSpec {
    frames_per_clip: usize,
    stride: usize,
}

impl ClipSpec {
    pub fn new(frames_per_clip: usize, stride: usize) -> Result<Self, VideoIoError> {
        if frames_per_clip < 2 || stride == 0 || stride > frames_per_clip {
            return Err(VideoIoError::BadClipSpec { frames_per_clip, stride });
        }
        Ok(Self { frames_per_clip, stride })
    }

    pub fn frames_per_clip(&self) -> usize {
        self.frames_per_clip
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    /// Number of complete clips in a video of `len` frames.
    pub fn clip_count(&self, len: usize) -> usize {
        if len < self.frames_per_clip {
            0
        } else {
            (len - self.frames_per_clip) / self.stride + 1
        }
    }
}

impl Default for ClipSpec {
    fn default() -> Self {
        Self { frames_per_clip: 16, stride: 1 }
    }
}

/// An F-frame window of a source video.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Clip {
    pub source_id: String,
    pub start_frame: usize,
    pub frames: Vec<Frame>,
}

impl Clip {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> u32 {
        self.frames[0].width
    }

    pub fn height(&self) -> u32 {
        self.frames[0].height
    }
}

/// Cuts `seq` into clips starting at 0, s, 2s, ...; a trailing partial clip is dropped.
pub fn segment(seq: &FrameSequence, spec: ClipSpec) -> Result<Vec<Clip>, VideoIoError> {
    let need = spec.frames_per_clip;
    if seq.len() < need {
        return Err(VideoIoError::TooShort { id: seq.id.clone(), len: seq.len(), need });
    }
    Ok((0..spec.clip_count(seq.len()))
        .map(|i| {
            let start = i * spec.stride;
            Clip {
                source_id: seq.id.clone(),
                start_frame: start,
                frames: seq.frames[start..start + need].to_vec(),
            }
        })
        .collect())
}
