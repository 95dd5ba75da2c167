use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{QueryGrid, TrackingError, TrajectorySet, TrajectorySource};
use crate::scalar::Real;
use crate::video_io::{Clip, Frame};

/// Pyramidal Lucas-Kanade settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LkParams {
    /// Total number of pyramid levels, including full resolution.
    pub pyramid_levels: usize,
    /// Half side of the square integration window, in pixels.
    pub window_radius: usize,
    /// Gauss-Newton iteration cap per level.
    pub max_iterations: usize,
    /// Stop iterating once an update is shorter than this, in pixels.
    pub convergence_epsilon: f64,
    /// Minimum eigenvalue of the window structure tensor, per window pixel and
    /// on intensities scaled to [0, 1]. Below it the window is treated as textureless.
    pub min_eigenvalue: f64,
}

impl Default for LkParams {
    fn default() -> Self {
        Self {
            pyramid_levels: 3,
            window_radius: 7,
            max_iterations: 30,
            convergence_epsilon: 0.01,
            min_eigenvalue: 1e-5,
        }
    }
}

impl LkParams {
    pub fn validate(&self) -> Result<(), TrackingError> {
        let bad = |m: &str| Err(TrackingError::BadParams(m.to_string()));
        if self.pyramid_levels == 0 {
            return bad("pyramid_levels must be positive");
        }
        if self.window_radius < 2 {
            return bad("window_radius must be at least 2");
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be positive");
        }
        if !(self.convergence_epsilon > 0.0) {
            return bad("convergence_epsilon must be positive");
        }
        if !(self.min_eigenvalue > 0.0) {
            return bad("min_eigenvalue must be positive");
        }
        Ok(())
    }
}

/// Gray image stored with a replicated border of `pad` pixels on every side,
/// so windows overlapping the edge can be sampled without clamping.
struct Plane<T> {
    w: usize,
    h: usize,
    pad: usize,
    stride: usize,
    data: Vec<T>,
}

impl<T: Real> Plane<T> {
    fn with_border(w: usize, h: usize, pad: usize, image: &[T]) -> Self {
        let stride = w + 2 * pad;
        let mut data = Vec::with_capacity(stride * (h + 2 * pad));
        for y in 0..h + 2 * pad {
            let row = &image[y.saturating_sub(pad).min(h - 1) * w..][..w];
            data.extend(std::iter::repeat_n(row[0], pad));
            data.extend_from_slice(row);
            data.extend(std::iter::repeat_n(row[w - 1], pad));
        }
        Self { w, h, pad, stride, data }
    }

    /// Bilinear samples on the `side`×`side` lattice whose first node is at
    /// (x, y), row-major, into `out`. Lattice offsets are whole pixels, so one
    /// pair of weights serves the whole patch: each source row is interpolated
    /// horizontally once, then adjacent rows are blended. Out-of-range taps are
    /// clamped to the border, which equals clamping the sample coordinates.
    fn sample_patch(&self, x: T, y: T, side: usize, scratch: &mut Vec<T>, cols: &mut Vec<usize>, out: &mut [T]) {
        let bound = T::lit(1e9);
        let x0 = x.max(-bound).min(bound).floor();
        let y0 = y.max(-bound).min(bound).floor();
        let (xi, yi) = (x0.to_isize().unwrap_or(0), y0.to_isize().unwrap_or(0));
        let (fx, fy) = (x - x0, y - y0);
        scratch.clear();
        scratch.resize((side + 1) * side, T::zero());
        let pad = self.pad as isize;
        let (px, py) = (xi + pad, yi + pad);
        let inside = px >= 0 && py >= 0 && px as usize + side < self.stride && py as usize + side < self.h + 2 * self.pad;
        if inside {
            for (row, dst) in scratch.chunks_exact_mut(side).enumerate() {
                let start = (py as usize + row) * self.stride + px as usize;
                let src = &self.data[start..start + side + 1];
                for ((d, &a), &b) in dst.iter_mut().zip(&src[..side]).zip(&src[1..]) {
                    *d = a + (b - a) * fx;
                }
            }
        } else {
            cols.clear();
            cols.extend((0..=side as isize).map(|c| (xi + c).clamp(0, self.w as isize - 1) as usize + self.pad));
            for (row, dst) in scratch.chunks_exact_mut(side).enumerate() {
                let y = (yi + row as isize).clamp(0, self.h as isize - 1) as usize + self.pad;
                let src = &self.data[y * self.stride..][..self.stride];
                for (d, c) in dst.iter_mut().zip(cols.windows(2)) {
                    let (a, b) = (src[c[0]], src[c[1]]);
                    *d = a + (b - a) * fx;
                }
            }
        }
        for ((o, &top), &bottom) in out.iter_mut().zip(&scratch[..side * side]).zip(&scratch[side..]) {
            *o = top + (bottom - top) * fy;
        }
    }

    fn from_gray(frame: &Frame, pad: usize) -> Self {
        let gray = frame.to_gray();
        let scale = T::lit(1.0 / 255.0);
        let image: Vec<T> = gray.data().iter().map(|&v| T::from_count(v as usize) * scale).collect();
        Self::with_border(gray.width() as usize, gray.height() as usize, pad, &image)
    }

    /// 5-tap binomial blur followed by 2x decimation.
    fn pyr_down(&self) -> Self {
        let k = [1.0, 4.0, 6.0, 4.0, 1.0].map(|v| T::lit(v / 16.0));
        let w = self.w.div_ceil(2);
        let h = self.h.div_ceil(2);
        // Horizontal pass on the kept columns only.
        let mut tmp = Vec::with_capacity(w * self.h);
        // The border (at least two pixels) supplies the clamped taps.
        debug_assert!(self.pad >= 2);
        for y in 0..self.h {
            let row = &self.data[(y + self.pad) * self.stride + self.pad - 2..];
            for x in 0..w {
                let taps = &row[2 * x..2 * x + 5];
                let mut acc = T::zero();
                for (&kv, &v) in k.iter().zip(taps) {
                    acc = acc + kv * v;
                }
                tmp.push(acc);
            }
        }
        let at = |x: usize, y: isize| tmp[y.clamp(0, self.h as isize - 1) as usize * w + x];
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h as isize {
            for x in 0..w {
                let mut acc = T::zero();
                for (i, &kv) in k.iter().enumerate() {
                    acc = acc + kv * at(x, 2 * y + i as isize - 2);
                }
                data.push(acc);
            }
        }
        Self::with_border(w, h, self.pad, &data)
    }
}

fn build_pyramid<T: Real>(frame: &Frame, levels: usize, pad: usize) -> Vec<Plane<T>> {
    let mut out: Vec<Plane<T>> = Vec::with_capacity(levels);
    out.push(Plane::from_gray(frame, pad));
    while out.len() < levels {
        let next = out[out.len() - 1].pyr_down();
        out.push(next);
    }
    out
}

/// Σ (t - m)·gx and Σ (t - m)·gy, accumulated in four interleaved lanes.
fn mismatch<T: Real>(t: &[T], m: &[T], gx: &[T], gy: &[T]) -> (T, T) {
    const LANES: usize = 4;
    let mut ax = [T::zero(); LANES];
    let mut ay = [T::zero(); LANES];
    let n = t.len() / LANES * LANES;
    for (((tc, mc), xc), yc) in t[..n]
        .chunks_exact(LANES)
        .zip(m[..n].chunks_exact(LANES))
        .zip(gx[..n].chunks_exact(LANES))
        .zip(gy[..n].chunks_exact(LANES))
    {
        for l in 0..LANES {
            let d = tc[l] - mc[l];
            ax[l] = ax[l] + d * xc[l];
            ay[l] = ay[l] + d * yc[l];
        }
    }
    let mut bx = (ax[0] + ax[2]) + (ax[1] + ax[3]);
    let mut by = (ay[0] + ay[2]) + (ay[1] + ay[3]);
    for i in n..t.len() {
        let d = t[i] - m[i];
        bx = bx + d * gx[i];
        by = by + d * gy[i];
    }
    (bx, by)
}

/// Per-thread buffers reused across points.
struct Scratch<T> {
    rows: Vec<T>,
    cols: Vec<usize>,
    patch: Vec<T>,
    template: Vec<T>,
    grad_x: Vec<T>,
    grad_y: Vec<T>,
    moved: Vec<T>,
}

impl<T: Real> Scratch<T> {
    fn new(r: usize) -> Self {
        let side = 2 * r + 1;
        let n = side * side;
        Self {
            rows: Vec::with_capacity((side + 3) * (side + 2)),
            cols: Vec::with_capacity(side + 3),
            patch: vec![T::zero(); (side + 2) * (side + 2)],
            template: vec![T::zero(); n],
            grad_x: vec![T::zero(); n],
            grad_y: vec![T::zero(); n],
            moved: vec![T::zero(); n],
        }
    }
}

/// Displacement of one point between two frames, or `None` when the window at
/// full resolution has no usable texture or the estimate runs away.
fn track_point<T: Real>(
    prev: &[Plane<T>],
    next: &[Plane<T>],
    pos: [T; 2],
    initial: [T; 2],
    params: &LkParams,
    sc: &mut Scratch<T>,
) -> Option<[T; 2]> {
    let r = params.window_radius as isize;
    let side = (2 * r + 1) as usize;
    let npix = T::from_count(side * side);
    let eps = T::lit(params.convergence_epsilon);
    let eps2 = eps * eps;
    // Anything beyond the pyramid's capture range is a divergent estimate.
    let limit = T::lit((params.window_radius as f64 + 1.0) * 2f64.powi(prev.len() as i32));
    let min_eig = T::lit(params.min_eigenvalue);
    let half = T::lit(0.5);
    let two = T::lit(2.0);
    let rr = T::lit(r as f64);

    let top = prev.len() - 1;
    let top_scale = T::lit(0.5f64.powi(top as i32));
    let mut guess = [initial[0] * top_scale, initial[1] * top_scale];

    for level in (0..=top).rev() {
        let scale = T::lit(0.5f64.powi(level as i32));
        let (pl, nl) = (&prev[level], &next[level]);
        // Continuous coordinates with pixel centers at +0.5.
        let cx = pos[0] * scale - half;
        let cy = pos[1] * scale - half;

        // Template with a one-pixel border; gradients are its central differences.
        let ps = side + 2;
        pl.sample_patch(cx - rr - T::one(), cy - rr - T::one(), ps, &mut sc.rows, &mut sc.cols, &mut sc.patch);
        let (mut gxx, mut gxy, mut gyy) = (T::zero(), T::zero(), T::zero());
        let patch = &sc.patch;
        let row = |i: usize| &patch[i * ps..(i + 1) * ps];
        let outputs = sc.template.chunks_exact_mut(side).zip(sc.grad_x.chunks_exact_mut(side)).zip(sc.grad_y.chunks_exact_mut(side));
        for (y, ((t, gx), gy)) in outputs.enumerate() {
            let (up, mid, down) = (&row(y)[1..=side], row(y + 1), &row(y + 2)[1..=side]);
            let horizontal = mid.windows(3);
            for ((((t, gx), gy), h), (u, d)) in t.iter_mut().zip(gx).zip(gy).zip(horizontal).zip(up.iter().zip(down)) {
                let ix = (h[2] - h[0]) * half;
                let iy = (*d - *u) * half;
                *t = h[1];
                *gx = ix;
                *gy = iy;
                gxx = gxx + ix * ix;
                gxy = gxy + ix * iy;
                gyy = gyy + iy * iy;
            }
        }
        let tr_half = (gxx + gyy) * half;
        let det = gxx * gyy - gxy * gxy;
        let disc = ((gxx - gyy) * (gxx - gyy) * T::lit(0.25) + gxy * gxy).sqrt();
        let lambda_min = tr_half - disc;

        if lambda_min / npix < min_eig || det <= T::zero() {
            if level == 0 {
                return None;
            }
            guess = [guess[0] * two, guess[1] * two];
            continue;
        }

        let level_limit = limit * scale;
        let (w, h) = (T::from_count(nl.w), T::from_count(nl.h));
        let mut flow = [T::zero(), T::zero()];
        let mut last = [T::zero(), T::zero()];
        for it in 0..params.max_iterations {
            let (dx, dy) = (guess[0] + flow[0], guess[1] + flow[1]);
            let (ox, oy) = (cx + dx - rr, cy + dy - rr);
            // Window entirely off the image, or beyond the capture range: lost.
            if ox + rr < -rr || oy + rr < -rr || ox >= w || oy >= h || dx.abs() > level_limit || dy.abs() > level_limit {
                return None;
            }
            nl.sample_patch(ox, oy, side, &mut sc.rows, &mut sc.cols, &mut sc.moved);
            let (bx, by) = mismatch(&sc.template, &sc.moved, &sc.grad_x, &sc.grad_y);
            let step_x = (gyy * bx - gxy * by) / det;
            let step_y = (gxx * by - gxy * bx) / det;
            // Bouncing between two positions: settle halfway.
            if it > 0 && (step_x + last[0]).abs() < eps && (step_y + last[1]).abs() < eps {
                flow = [flow[0] + step_x * half, flow[1] + step_y * half];
                break;
            }
            flow = [flow[0] + step_x, flow[1] + step_y];
            if step_x * step_x + step_y * step_y < eps2 {
                break;
            }
            last = [step_x, step_y];
        }

        guess = [guess[0] + flow[0], guess[1] + flow[1]];
        if level > 0 {
            guess = [guess[0] * two, guess[1] * two];
        }
    }

    let ok = guess.iter().all(|v| v.is_finite() && v.abs() <= limit);
    ok.then_some(guess)
}

/// Tracks every grid point through the clip with pyramidal Lucas-Kanade.
///
/// Each step starts from the point's previous displacement. Points whose window
/// is textureless (or whose estimate diverges) keep their previous displacement,
/// so the output is always finite.
pub fn track_builtin<T: Real>(
    clip: &Clip,
    grid: &QueryGrid,
    params: &LkParams,
) -> Result<TrajectorySet<T>, TrackingError> {
    params.validate()?;
    let frames = clip.len();
    if frames < 2 {
        return Err(TrackingError::BadShape(format!("clip has {frames} frames")));
    }
    // Wide enough for a template window (with its gradient ring) centred
    // anywhere on the image.
    let pad = params.window_radius + 3;
    let pyramids: Vec<Vec<Plane<T>>> =
        clip.frames.par_iter().map(|f| build_pyramid(f, params.pyramid_levels, pad)).collect();

    let tracks: Vec<Vec<[T; 2]>> = grid
        .points()
        .par_iter()
        .map_init(|| Scratch::new(params.window_radius), |sc, p| {
            let mut pos = [T::lit(p[0]), T::lit(p[1])];
            let mut velocity = [T::zero(), T::zero()];
            let mut path = Vec::with_capacity(frames);
            path.push(pos);
            for t in 1..frames {
                if let Some(d) = track_point(&pyramids[t - 1], &pyramids[t], pos, velocity, params, sc) {
                    velocity = d;
                }
                pos = [pos[0] + velocity[0], pos[1] + velocity[1]];
                path.push(pos);
            }
            path
        })
        .collect();

    let n = grid.len();
    let mut coords = Vec::with_capacity(frames * n * 2);
    for t in 0..frames {
        for track in &tracks {
            coords.extend_from_slice(&track[t]);
        }
    }
    let mut set = TrajectorySet::new(frames, n, coords, TrajectorySource::BuiltinLk)?;
    set.set_origin(Some(super::ClipOrigin {
        video_id: clip.source_id.clone(),
        start_frame: clip.start_frame,
    }));
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::Texture;
    use crate::tracking::init_grid;

    fn clip_of(frames: Vec<Frame>) -> Clip {
        Clip { source_id: "t".into(), start_frame: 0, frames }
    }

    fn translating_clip(dx: i64, dy: i64, len: usize, seed: u64) -> Clip {
        let tex = Texture::new(256, 256, seed);
        let frames = (0..len as i64).map(|t| tex.render_shifted(dx * t, dy * t)).collect();
        clip_of(frames)
    }

    #[test]
    fn invalid_params_are_rejected() {
        let mut p = LkParams::default();
        p.window_radius = 1;
        assert!(p.validate().is_err());
        assert!(LkParams::default().validate().is_ok());
    }

    #[test]
    fn static_clip_keeps_grid_positions() {
        let tex = Texture::new(256, 256, 3);
        let frame = tex.render_shifted(0, 0);
        let clip = clip_of(vec![frame; 6]);
        let grid = init_grid(400, 256, 256).unwrap();
        let t: TrajectorySet<f32> = track_builtin(&clip, &grid, &LkParams::default()).unwrap();
        let first = t.frame(0).to_vec();
        for f in 1..6 {
            assert_eq!(t.frame(f), first.as_slice());
        }
    }

    #[test]
    fn uniform_clip_is_degenerate_and_static() {
        let frame = Frame::filled(256, 256, 3, 90).unwrap();
        let clip = clip_of(vec![frame; 5]);
        let grid = init_grid(100, 256, 256).unwrap();
        let t: TrajectorySet<f64> = track_builtin(&clip, &grid, &LkParams::default()).unwrap();
        for f in 1..5 {
            assert_eq!(t.frame(f), t.frame(0));
        }
    }

    #[test]
    fn recovers_integer_translation() {
        let clip = translating_clip(2, 0, 5, 11);
        let grid = init_grid(400, 256, 256).unwrap();
        let t: TrajectorySet<f64> = track_builtin(&clip, &grid, &LkParams::default()).unwrap();
        for j in 0..400 {
            let p0 = t.point(0, j);
            if p0[0] < 32.0 || p0[0] > 224.0 || p0[1] < 32.0 || p0[1] > 224.0 {
                continue;
            }
            for f in 1..5 {
                let (a, b) = (t.point(f - 1, j), t.point(f, j));
                assert!((b[0] - a[0] - 2.0).abs() < 0.25, "point {j} frame {f}: {:?} -> {:?}", a, b);
                assert!((b[1] - a[1]).abs() < 0.25);
            }
        }
    }

    #[test]
    fn textureless_window_continues_at_previous_velocity() {
        // Texture for two frames, then the picture goes flat: from the first flat
        // frame on, every window is textureless and points coast.
        let mut frames: Vec<Frame> = translating_clip(3, 0, 2, 5).frames;
        let flat = Frame::filled(256, 256, 1, 128).unwrap();
        frames.extend([flat.clone(), flat.clone(), flat]);
        let grid = init_grid(16, 256, 256).unwrap();
        let t: TrajectorySet<f64> = track_builtin(&clip_of(frames), &grid, &LkParams::default()).unwrap();
        for j in 0..16 {
            let v = |f: usize| {
                let (a, b) = (t.point(f - 1, j), t.point(f, j));
                [b[0] - a[0], b[1] - a[1]]
            };
            assert!(t.coords().iter().all(|c| c.is_finite()));
            for f in [3, 4] {
                assert!((v(f)[0] - v(2)[0]).abs() < 1e-9);
                assert!((v(f)[1] - v(2)[1]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn tracking_is_deterministic() {
        let clip = translating_clip(-1, 3, 6, 21);
        let grid = init_grid(100, 256, 256).unwrap();
        let a: TrajectorySet<f32> = track_builtin(&clip, &grid, &LkParams::default()).unwrap();
        let b: TrajectorySet<f32> = track_builtin(&clip, &grid, &LkParams::default()).unwrap();
        let bits = |t: &TrajectorySet<f32>| t.coords().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }
}
