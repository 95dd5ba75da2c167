//! Synthetic test videos: textured discs moving over a textured, panning
//! background according to one of three motion laws.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::perturb::stream;
use crate::video_io::{Frame, FrameSequence};

/// Periodic multi-octave value noise with intensities in [16, 240].
#[derive(Clone, Debug)]
pub struct Texture {
    w: usize,
    h: usize,
    data: Vec<f32>,
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

impl Texture {
    pub fn new(w: usize, h: usize, seed: u64) -> Self {
        let mut rng = stream(seed, "texture");
        Self::from_rng(w, h, &mut rng)
    }

    fn from_rng(w: usize, h: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut acc = vec![0.0f64; w * h];
        for (cell, weight) in [(32.0, 0.45), (16.0, 0.3), (8.0, 0.15), (4.0, 0.1)] {
            let gw = ((w as f64 / cell).round() as usize).max(1);
            let gh = ((h as f64 / cell).round() as usize).max(1);
            let lattice: Vec<f64> = (0..gw * gh).map(|_| rng.random::<f64>()).collect();
            for y in 0..h {
                let v = y as f64 * gh as f64 / h as f64;
                let (y0, ty) = (v.floor() as usize % gh, smoothstep(v.fract()));
                let y1 = (y0 + 1) % gh;
                for x in 0..w {
                    let u = x as f64 * gw as f64 / w as f64;
                    let (x0, tx) = (u.floor() as usize % gw, smoothstep(u.fract()));
                    let x1 = (x0 + 1) % gw;
                    let top = lattice[y0 * gw + x0] * (1.0 - tx) + lattice[y0 * gw + x1] * tx;
                    let bottom = lattice[y1 * gw + x0] * (1.0 - tx) + lattice[y1 * gw + x1] * tx;
                    acc[y * w + x] += weight * (top * (1.0 - ty) + bottom * ty);
                }
            }
        }
        let (lo, hi) = acc.iter().fold((f64::MAX, f64::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let span = (hi - lo).max(1e-9);
        let data = acc.iter().map(|&v| (16.0 + 224.0 * (v - lo) / span) as f32).collect();
        Self { w, h, data }
    }

    /// Periodic bilinear sample.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let (w, h) = (self.w as f64, self.h as f64);
        let x = x.rem_euclid(w);
        let y = y.rem_euclid(h);
        let (x0, y0) = (x.floor() as usize % self.w, y.floor() as usize % self.h);
        let (x1, y1) = ((x0 + 1) % self.w, (y0 + 1) % self.h);
        let (fx, fy) = (x.fract(), y.fract());
        let px = |x: usize, y: usize| self.data[y * self.w + x] as f64;
        let top = px(x0, y0) * (1.0 - fx) + px(x1, y0) * fx;
        let bottom = px(x0, y1) * (1.0 - fx) + px(x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    /// Sampler for `sample(x + ox, y + oy)` over integer x, y, with the tap
    /// indices and weights computed once.
    fn offset_sampler(&self, ox: f64, oy: f64, x_range: (i64, i64), y_range: (i64, i64)) -> OffsetSampler<'_> {
        let taps = |o: f64, (lo, hi): (i64, i64), n: usize| {
            let base = o.floor() as i64;
            let idx: Vec<usize> = (lo..=hi + 1).map(|x| (x + base).rem_euclid(n as i64) as usize).collect();
            (idx, o - o.floor())
        };
        let (cols, fx) = taps(ox, x_range, self.w);
        let (rows, fy) = taps(oy, y_range, self.h);
        OffsetSampler { tex: self, cols, rows, fx, fy, x0: x_range.0, y0: y_range.0 }
    }

    /// Gray frame of the texture translated by whole pixels with wrap-around.
    pub fn render_shifted(&self, dx: i64, dy: i64) -> Frame {
        let mut data = Vec::with_capacity(self.w * self.h);
        for y in 0..self.h as i64 {
            for x in 0..self.w as i64 {
                let sx = (x - dx).rem_euclid(self.w as i64) as usize;
                let sy = (y - dy).rem_euclid(self.h as i64) as usize;
                data.push(self.data[sy * self.w + sx].round() as u8);
            }
        }
        Frame::new(self.w as u32, self.h as u32, 1, data).expect("texture frame shape")
    }
}

struct OffsetSampler<'a> {
    tex: &'a Texture,
    cols: Vec<usize>,
    rows: Vec<usize>,
    fx: f64,
    fy: f64,
    x0: i64,
    y0: i64,
}

impl OffsetSampler<'_> {
    #[inline]
    fn at(&self, x: i64, y: i64) -> f64 {
        let (i, j) = ((x - self.x0) as usize, (y - self.y0) as usize);
        let (c0, c1) = (self.cols[i], self.cols[i + 1]);
        let (r0, r1) = (self.rows[j] * self.tex.w, self.rows[j + 1] * self.tex.w);
        let d = &self.tex.data;
        let top = d[r0 + c0] as f64 * (1.0 - self.fx) + d[r0 + c1] as f64 * self.fx;
        let bottom = d[r1 + c0] as f64 * (1.0 - self.fx) + d[r1 + c1] as f64 * self.fx;
        top * (1.0 - self.fy) + bottom * self.fy
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionLaw {
    ConstantVelocity,
    Sinusoidal,
    RandomWalk,
}

impl MotionLaw {
    pub fn as_str(&self) -> &'static str {
        match self {
            MotionLaw::ConstantVelocity => "constant_velocity",
            MotionLaw::Sinusoidal => "sinusoidal",
            MotionLaw::RandomWalk => "random_walk",
        }
    }
}

impl fmt::Display for MotionLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MotionLaw {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [MotionLaw::ConstantVelocity, MotionLaw::Sinusoidal, MotionLaw::RandomWalk]
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown motion law `{s}`"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub frames: usize,
    pub size: u32,
    pub sprites: usize,
    pub law: MotionLaw,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { frames: 16, size: 256, sprites: 4, law: MotionLaw::ConstantVelocity }
    }
}

/// Offsets of a moving object over time, in pixels, starting at (0, 0).
fn path(law: MotionLaw, frames: usize, scale: f64, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    let heading = rng.random_range(0.0..TAU);
    let dir = [heading.cos(), heading.sin()];
    match law {
        MotionLaw::ConstantVelocity => {
            let speed = scale * rng.random_range(1.0..4.0);
            (0..frames).map(|t| [dir[0] * speed * t as f64, dir[1] * speed * t as f64]).collect()
        }
        MotionLaw::Sinusoidal => {
            let amp = scale * rng.random_range(4.0..10.0);
            let omega = rng.random_range(0.5..1.0);
            let phase = rng.random_range(0.0..TAU);
            let base = phase.sin();
            (0..frames)
                .map(|t| {
                    let s = (omega * t as f64 + phase).sin() - base;
                    [dir[0] * amp * s, dir[1] * amp * s]
                })
                .collect()
        }
        MotionLaw::RandomWalk => {
            let mut pos = [0.0, 0.0];
            let mut vel = [dir[0] * scale, dir[1] * scale];
            (0..frames)
                .map(|_| {
                    let here = pos;
                    pos = [pos[0] + vel[0], pos[1] + vel[1]];
                    vel = [
                        (vel[0] + scale * rng.random_range(-1.0..1.0)).clamp(-5.0, 5.0),
                        (vel[1] + scale * rng.random_range(-1.0..1.0)).clamp(-5.0, 5.0),
                    ];
                    here
                })
                .collect()
        }
    }
}

struct Sprite {
    texture: Texture,
    center: [f64; 2],
    radius: f64,
    path: Vec<[f64; 2]>,
}

/// Renders one video; identical (config, id, seed) always gives identical frames.
pub fn generate_video(config: &SynthConfig, id: &str, seed: u64) -> FrameSequence {
    let mut rng = stream(seed, &format!("synth/{}/{id}", config.law));
    let size = config.size as usize;
    let background = Texture::from_rng(size, size, &mut rng);
    let camera = path(config.law, config.frames, 0.5, &mut rng);
    let lo = size as f64 * 0.25;
    let hi = size as f64 * 0.75;
    let sprites: Vec<Sprite> = (0..config.sprites)
        .map(|_| Sprite {
            texture: Texture::from_rng(64, 64, &mut rng),
            center: [rng.random_range(lo..hi), rng.random_range(lo..hi)],
            radius: rng.random_range(0.1..0.2) * size as f64,
            path: path(config.law, config.frames, 1.0, &mut rng),
        })
        .collect();

    let last = size as i64 - 1;
    let frames = (0..config.frames)
        .map(|t| {
            let cam = camera[t];
            let bg = background.offset_sampler(0.5 - cam[0], 0.5 - cam[1], (0, last), (0, last));
            let mut canvas: Vec<f64> = Vec::with_capacity(size * size);
            for y in 0..=last {
                canvas.extend((0..=last).map(|x| bg.at(x, y)));
            }
            for s in &sprites {
                let cx = s.center[0] + s.path[t][0];
                let cy = s.center[1] + s.path[t][1];
                // Pixels farther than radius + 0.75 have zero coverage.
                let reach = s.radius + 1.0;
                let clip = |v: f64| (v.floor() as i64).clamp(0, last);
                let (xs, xe) = (clip(cx - reach), clip(cx + reach));
                let (ys, ye) = (clip(cy - reach), clip(cy + reach));
                let tex = s.texture.offset_sampler(0.5 - cx + 32.0, 0.5 - cy + 32.0, (xs, xe), (ys, ye));
                for y in ys..=ye {
                    for x in xs..=xe {
                        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                        let dist = ((px - cx).powi(2) + (py - cy).powi(2)).sqrt();
                        let alpha = ((s.radius - dist) / 1.5 + 0.5).clamp(0.0, 1.0);
                        if alpha > 0.0 {
                            let v = &mut canvas[y as usize * size + x as usize];
                            *v = *v * (1.0 - alpha) + tex.at(x, y) * alpha;
                        }
                    }
                }
            }
            let data = canvas.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect();
            Frame::new(config.size, config.size, 1, data).expect("synthetic frame shape")
        })
        .collect();
    FrameSequence::new(id, frames).expect("synthetic frames share a shape")
}

/// `count` videos named `video_00000`, `video_00001`, ...
pub fn generate_set(config: &SynthConfig, count: usize, seed: u64) -> Vec<FrameSequence> {
    (0..count)
        .into_par_iter()
        .map(|i| generate_video(config, &format!("video_{i:05}"), seed))
        .collect()
}
