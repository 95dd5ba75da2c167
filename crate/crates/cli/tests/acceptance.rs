//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when a gated criterion fails.
//!
//! Run a subset by passing criterion numbers: `cargo test --test acceptance -- 3 6`.

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use fvmd_cli::experiments::{sanity_scores, sensitivity_scores, summarize_sanity, synthetic_features};
use fvmd_cli::pipeline::{canonical_grid, track_video_set, write_trajectories, StageTimings};
use fvmd_cli::{commands::cmd_compute, RunConfig};
use fvmd_core::motion::{angle_bin, magnitude_bin};
use fvmd_core::perturb::stream;
use fvmd_core::synth::{generate_set, generate_video, MotionLaw, SynthConfig, Texture};
use fvmd_core::video_io::{save_frames, Clip};
use fvmd_core::{
    acceleration_field, extract_feature, fit_gaussian, frechet_distance, init_grid, polar_decompose, quantize,
    sqrtm_psd, track_builtin, velocity_field, FeatureConfig, FieldSelection, GaussianStats64, HistogramKind,
    LkParams, NoiseKind, TrajectorySet32, TrajectorySet64, TrajectorySource, VolumeSpec,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

type Outcome = Result<String, String>;

struct Criterion {
    id: u32,
    name: &'static str,
    limit: Option<Duration>,
    gated: bool,
    run: fn() -> Outcome,
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

// 1 -------------------------------------------------------------------------

fn unit_semantics() -> Outcome {
    // One point walking (0,0) -> (3,0) -> (3,4) -> (1,4) -> (1,4).
    let single = TrajectorySet64::new(
        5,
        1,
        vec![0.0, 0.0, 3.0, 0.0, 3.0, 4.0, 1.0, 4.0, 1.0, 4.0],
        TrajectorySource::Imported,
    )
    .map_err(err)?;
    let vel = velocity_field(&single);
    let acc = acceleration_field(&vel).map_err(err)?;
    let want_v = [0.0, 0.0, 3.0, 0.0, 0.0, 4.0, -2.0, 0.0, 0.0, 0.0];
    let want_a = [0.0, 0.0, 3.0, 0.0, -3.0, 4.0, -2.0, -4.0, 2.0, 0.0];
    ensure(vel.values() == want_v, || format!("velocity {:?}", vel.values()))?;
    ensure(acc.values() == want_a, || format!("acceleration {:?}", acc.values()))?;

    // Nine points with integer coordinates against a direct difference loop.
    let (frames, points) = (6, 9);
    let mut rng = stream(1, "acceptance/unit");
    let coords: Vec<f64> = (0..frames * points * 2).map(|_| rng.random_range(-300i32..300) as f64).collect();
    let traj = TrajectorySet64::new(frames, points, coords.clone(), TrajectorySource::Imported).map_err(err)?;
    let vel = velocity_field(&traj);
    let acc = acceleration_field(&vel).map_err(err)?;
    let at = |c: &[f64], t: usize, j: usize, k: usize| c[(t * points + j) * 2 + k];
    for t in 0..frames {
        for j in 0..points {
            for k in 0..2 {
                let v = if t == 0 { 0.0 } else { at(&coords, t, j, k) - at(&coords, t - 1, j, k) };
                let v_prev = if t <= 1 { 0.0 } else { at(&coords, t - 1, j, k) - at(&coords, t - 2, j, k) };
                let a = if t == 0 { 0.0 } else { v - v_prev };
                ensure(at(vel.values(), t, j, k) == v, || format!("velocity t={t} j={j}"))?;
                ensure(at(acc.values(), t, j, k) == a, || format!("acceleration t={t} j={j}"))?;
            }
        }
    }

    for (rho, bin) in [(0.0, 0u8), (3.0, 2), (255.0, 8)] {
        ensure(magnitude_bin(rho) == bin, || format!("magnitude bin of {rho}: {}", magnitude_bin(rho)))?;
    }
    for (deg, bin) in [(0.0f64, 0u8), (90.0, 2), (359.0, 7)] {
        let b = angle_bin(deg.to_radians());
        ensure(b == bin, || format!("angle bin of {deg} deg: {b}"))?;
    }

    // Same endpoints through the field path: vectors at 0, 90 and 359 degrees
    // with magnitudes 3, 3 and 255.
    let d = 359f64.to_radians();
    let path = vec![0.0, 0.0, 3.0, 0.0, 3.0, 3.0, 3.0 + 255.0 * d.cos(), 3.0 + 255.0 * d.sin()];
    let traj = TrajectorySet64::new(4, 1, path, TrajectorySource::Imported).map_err(err)?;
    let q = quantize(&polar_decompose(&velocity_field(&traj)));
    ensure(q.mag_bins() == [0, 2, 2, 8], || format!("field magnitude bins {:?}", q.mag_bins()))?;
    ensure(q.angle_bins() == [0, 0, 2, 7], || format!("field angle bins {:?}", q.angle_bins()))?;
    Ok("fields and bin endpoints exact".into())
}

// 2 -------------------------------------------------------------------------

fn feature_shapes() -> Outcome {
    let grid = init_grid(400, 256, 256).map_err(err)?;
    let traj = TrajectorySet64::stationary(&grid, 16).map_err(err)?;
    let volume = VolumeSpec { f: 4, k: 5 };
    let mut lens = Vec::new();
    for (fields, hist, want) in [
        (FieldSelection::Velocity, HistogramKind::Hist1d, 512),
        (FieldSelection::Velocity, HistogramKind::Hist2d, 4608),
        (FieldSelection::Combined, HistogramKind::Hist1d, 1024),
    ] {
        let cfg = FeatureConfig { fields, hist, volume, ..FeatureConfig::default() };
        let len = extract_feature(&traj, &cfg).map_err(err)?.len();
        ensure(len == want, || format!("{fields}-{hist}: {len}, want {want}"))?;
        lens.push(len);
    }
    let default_len = RunConfig::default().feature_len().map_err(err)?;
    ensure(default_len == 1024, || format!("default configuration gives {default_len}"))?;
    Ok(format!("lengths {lens:?}"))
}

// 3 -------------------------------------------------------------------------

const EPS: f64 = 1e-6;

fn diagonal_oracle(ma: &[f64], va: &[f64], mb: &[f64], vb: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..ma.len() {
        let (a, b) = (va[i] + EPS, vb[i] + EPS);
        total += (ma[i] - mb[i]).powi(2) + a + b - 2.0 * (a * b).sqrt();
    }
    total
}

fn random_spd(d: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let x = DMatrix::from_fn(d, 2 * d, |_, _| rng.random_range(-1.0..1.0));
    &x * x.transpose() / (2 * d) as f64
}

fn frob_rel(got: &DMatrix<f64>, want: &DMatrix<f64>) -> f64 {
    (got - want).norm() / want.norm()
}

fn frechet_oracle() -> Outcome {
    let mut rng = stream(3, "acceptance/frechet");
    let mut worst_diag = 0.0f64;
    for _ in 0..200 {
        let d = rng.random_range(1..=16);
        let mut draw = |lo: f64, hi: f64| (0..d).map(|_| rng.random_range(lo..hi)).collect::<Vec<f64>>();
        let (ma, mb) = (draw(-5.0, 5.0), draw(-5.0, 5.0));
        let (va, vb) = (draw(0.01, 4.0), draw(0.01, 4.0));
        let stats = |m: &[f64], v: &[f64]| {
            GaussianStats64::from_parts(DVector::from_column_slice(m), DMatrix::from_diagonal(&DVector::from_column_slice(v)), 10)
        };
        let a = stats(&ma, &va).map_err(err)?;
        let b = stats(&mb, &vb).map_err(err)?;
        let got = frechet_distance(&a, &b, EPS).map_err(err)?.value;
        worst_diag = worst_diag.max(rel(got, diagonal_oracle(&ma, &va, &mb, &vb)));
    }
    ensure(worst_diag <= 1e-8, || format!("diagonal relative error {worst_diag:e}"))?;

    let (mut worst_root, mut worst_sym) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let d = 32;
        let (ca, cb) = (random_spd(d, &mut rng), random_spd(d, &mut rng));
        let ma = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
        let mb = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
        let root_a = sqrtm_psd(&ca).map_err(err)?;
        let inner = &root_a * &cb * &root_a;
        let root_inner = sqrtm_psd(&inner).map_err(err)?;
        worst_root = worst_root.max(frob_rel(&(&root_a * &root_a), &ca)).max(frob_rel(&(&root_inner * &root_inner), &inner));

        let a = GaussianStats64::from_parts(ma, ca, 64).map_err(err)?;
        let b = GaussianStats64::from_parts(mb, cb, 64).map_err(err)?;
        let ab = frechet_distance(&a, &b, EPS).map_err(err)?.value;
        let ba = frechet_distance(&b, &a, EPS).map_err(err)?.value;
        worst_sym = worst_sym.max(rel(ab, ba));
    }
    ensure(worst_root < 1e-10, || format!("sqrtm reconstruction error {worst_root:e}"))?;
    ensure(worst_sym < 1e-6, || format!("asymmetry {worst_sym:e}"))?;
    Ok(format!("diagonal err {worst_diag:.1e}, sqrtm err {worst_root:.1e}, asymmetry {worst_sym:.1e}"))
}

// 4 -------------------------------------------------------------------------

fn sanity_check() -> Outcome {
    let cfg = RunConfig::default();
    let linear = SynthConfig { law: MotionLaw::ConstantVelocity, ..SynthConfig::default() };
    let wavy = SynthConfig { law: MotionLaw::Sinusoidal, ..SynthConfig::default() };
    let a = synthetic_features(&linear, 1024, 0, &cfg).map_err(err)?;
    let b = synthetic_features(&wavy, 512, 0, &cfg).map_err(err)?;
    let sizes = [64, 128, 256, 512];
    let rows = sanity_scores(&a, Some(&b), &sizes, 5, 0, cfg.eps).map_err(err)?;
    let summary = summarize_sanity(&rows);
    let line: Vec<String> = summary
        .iter()
        .map(|s| format!("{}: same {:.3} cross {:.3}", s.size, s.same, s.cross.unwrap_or(f64::NAN)))
        .collect();
    let line = line.join("; ");
    for w in summary.windows(2) {
        ensure(w[1].same <= w[0].same, || format!("same-distribution score rises from size {} to {}: {line}", w[0].size, w[1].size))?;
    }
    let (first, last) = (&summary[0], &summary[summary.len() - 1]);
    ensure(last.same < 0.25 * first.same, || format!("size-{} score is {:.1}% of size-{}: {line}", last.size, 100.0 * last.same / first.same, first.size))?;
    for s in &summary {
        let cross = s.cross.unwrap_or(f64::NAN);
        ensure(cross >= 5.0 * s.same, || format!("size {}: cross/same = {:.2}: {line}", s.size, cross / s.same))?;
    }
    Ok(line)
}

// 5 -------------------------------------------------------------------------

fn sensitivity() -> Outcome {
    let cfg = RunConfig::default();
    let videos = generate_set(&SynthConfig::default(), 256, 0);
    let rows = sensitivity_scores(&videos, &NoiseKind::ALL, true, &cfg).map_err(err)?;
    let mut report = Vec::new();
    let mut failures = Vec::new();
    for kind in NoiseKind::ALL {
        let of_kind: Vec<_> = rows.iter().filter(|r| r.kind == kind).collect();
        let zero = of_kind.iter().find(|r| r.intensity == 0.0).map(|r| r.score).unwrap_or(f64::NAN);
        let scores: Vec<f64> = of_kind.iter().filter(|r| r.intensity != 0.0).map(|r| r.score).collect();
        report.push(format!("{kind} [{}] zero {zero:.1e}", scores.iter().map(|s| format!("{s:.2}")).collect::<Vec<_>>().join(", ")));
        if !(zero <= 1e-6) {
            failures.push(format!("{kind} zero-intensity score {zero:e}"));
        }
        if scores.len() != 5 || scores.windows(2).any(|w| w[1] <= w[0]) {
            failures.push(format!("{kind} not strictly increasing"));
        }
    }
    let report = report.join("; ");
    if failures.is_empty() {
        Ok(report)
    } else {
        Err(format!("{}: {report}", failures.join(", ")))
    }
}

// 6 -------------------------------------------------------------------------

fn translating_clip(dx: i64, dy: i64, frames: usize, seed: u64) -> Clip {
    let tex = Texture::new(256, 256, seed);
    Clip { source_id: "shift".into(), start_frame: 0, frames: (0..frames as i64).map(|t| tex.render_shifted(dx * t, dy * t)).collect() }
}

fn tracker_fidelity() -> Outcome {
    let grid = init_grid(400, 256, 256).map_err(err)?;
    let params = LkParams::default();
    let frames = 16;
    let margin = 24.0;
    let inside = |p: [f32; 2]| {
        let (x, y) = (p[0] as f64, p[1] as f64);
        x >= margin && y >= margin && x <= 256.0 - margin && y <= 256.0 - margin
    };
    let mut report = Vec::new();
    for (k, (dx, dy)) in [(2i64, 0i64), (-1, 3)].into_iter().enumerate() {
        let traj: TrajectorySet32 = track_builtin(&translating_clip(dx, dy, frames, 10 + k as u64), &grid, &params).map_err(err)?;
        let (mut total, mut count) = (0.0, 0usize);
        for (j, start) in grid.points().iter().enumerate() {
            let end = [start[0] + (dx * (frames as i64 - 1)) as f64, start[1] + (dy * (frames as i64 - 1)) as f64];
            if !(inside([start[0] as f32, start[1] as f32]) && inside([end[0] as f32, end[1] as f32])) {
                continue;
            }
            for t in 1..frames {
                let (p, q) = (traj.point(t - 1, j), traj.point(t, j));
                let ex = (q[0] - p[0]) as f64 - dx as f64;
                let ey = (q[1] - p[1]) as f64 - dy as f64;
                total += ex.hypot(ey);
                count += 1;
            }
        }
        ensure(count > 0, || "no interior points".into())?;
        let mean = total / count as f64;
        ensure(mean < 0.25, || format!("({dx}, {dy}): mean error {mean:.3} px/frame"))?;
        report.push(format!("({dx}, {dy}) err {mean:.4} over {} points", count / (frames - 1)));
    }

    let still = translating_clip(0, 0, frames, 12);
    let traj = track_builtin::<f32>(&still, &grid, &params).map_err(err)?.cast::<f64>();
    let cfg = FeatureConfig { fields: FieldSelection::Velocity, ..FeatureConfig::default() };
    for hist in [HistogramKind::Hist1d, HistogramKind::Hist2d] {
        let feat = extract_feature(&traj, &FeatureConfig { hist, ..cfg }).map_err(err)?;
        // The 2D histogram counts zero vectors in its (angle 0, magnitude 0) bins.
        let moving = match hist {
            HistogramKind::Hist1d => feat.data().iter().any(|&v| v != 0.0),
            HistogramKind::Hist2d => feat.data().chunks_exact(72).any(|h| h.iter().skip(1).any(|&v| v != 0.0)),
        };
        ensure(!moving, || format!("static clip has motion in the {hist} velocity feature"))?;
    }
    let vel = velocity_field(&traj);
    ensure(vel.values().iter().all(|&v| v == 0.0), || "static clip has non-zero velocity".into())?;
    report.push("static clip: zero velocity".into());
    Ok(report.join("; "))
}

// 7 -------------------------------------------------------------------------

fn throughput() -> Outcome {
    let grid = init_grid(400, 256, 256).map_err(err)?;
    let mut rng = stream(7, "acceptance/throughput");
    let clips: Vec<TrajectorySet64> = (0..1024)
        .map(|_| {
            let base = TrajectorySet64::stationary(&grid, 16).expect("stationary");
            let mut walk = vec![[0.0f64; 2]; grid.len()];
            base.map_points(|f, j, p| {
                if f > 0 {
                    walk[j][0] += rng.random_range(-4.0..4.0);
                    walk[j][1] += rng.random_range(-4.0..4.0);
                }
                [p[0] + walk[j][0], p[1] + walk[j][1]]
            })
            .expect("finite walk")
        })
        .collect();
    let cfg = FeatureConfig::default();
    let start = Instant::now();
    let features: Vec<_> = clips.iter().map(|c| extract_feature(c, &cfg)).collect::<Result<_, _>>().map_err(err)?;
    let feature_s = start.elapsed().as_secs_f64();
    let start = Instant::now();
    let (a, b) = features.split_at(512);
    let score = frechet_distance(&fit_gaussian(a).map_err(err)?, &fit_gaussian(b).map_err(err)?, EPS).map_err(err)?;
    let frechet_s = start.elapsed().as_secs_f64();
    let per_clip = (feature_s + frechet_s) / 1024.0;
    let line = format!(
        "{per_clip:.4} s/clip (fields+histograms {:.4} s/clip, fit+Frechet {frechet_s:.2} s total, score {:.2})",
        feature_s / 1024.0,
        score.value
    );
    ensure(per_clip <= 0.1, || line.clone())?;
    Ok(line)
}

// 8 -------------------------------------------------------------------------

fn write_set(dir: &Path, law: MotionLaw, count: usize) -> Result<(), String> {
    let synth = SynthConfig { frames: 18, law, ..SynthConfig::default() };
    for i in 0..count {
        let id = format!("video_{i:05}");
        save_frames(&generate_video(&synth, &id, 8), dir.join(&id)).map_err(err)?;
    }
    Ok(())
}

fn in_pool<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("thread pool").install(f)
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(err)?;
    let (gen, reference) = (tmp.path().join("gen"), tmp.path().join("ref"));
    write_set(&gen, MotionLaw::ConstantVelocity, 4)?;
    write_set(&reference, MotionLaw::RandomWalk, 4)?;
    let cfg = RunConfig::default();
    canonical_grid(&cfg).map_err(err)?;

    let mut files = Vec::new();
    for (run, threads) in [(0, 1), (1, 3)] {
        let path = tmp.path().join(format!("run{run}.fvmdtraj"));
        in_pool(threads, || {
            let data = track_video_set(&gen, &cfg, &mut StageTimings::default())?;
            write_trajectories(&data.trajectories, &path)
        })
        .map_err(err)?;
        files.push(fs::read(&path).map_err(err)?);
    }
    ensure(files[0] == files[1], || "trajectory files differ between runs".into())?;

    let scores: Vec<f64> = [1, 3]
        .into_iter()
        .map(|threads| in_pool(threads, || cmd_compute(&gen, &reference, &cfg, None)).map(|r| r.value))
        .collect::<Result<_, _>>()
        .map_err(err)?;
    let diff = rel(scores[1], scores[0]);
    ensure(diff <= 1e-12, || format!("scores {:?} differ by {diff:e}", scores))?;
    Ok(format!("{} identical trajectory bytes, score {:.6} reproduced (rel diff {diff:.1e})", files[0].len(), scores[0]))
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { id: 1, name: "unit semantics", limit: Some(Duration::from_secs(1)), gated: true, run: unit_semantics },
        Criterion { id: 2, name: "feature shapes", limit: Some(Duration::from_secs(1)), gated: true, run: feature_shapes },
        Criterion { id: 3, name: "Frechet oracle", limit: Some(Duration::from_secs(10)), gated: true, run: frechet_oracle },
        Criterion { id: 4, name: "sanity check", limit: Some(Duration::from_secs(300)), gated: true, run: sanity_check },
        Criterion { id: 5, name: "noise sensitivity", limit: Some(Duration::from_secs(600)), gated: true, run: sensitivity },
        Criterion { id: 6, name: "tracker fidelity", limit: Some(Duration::from_secs(30)), gated: true, run: tracker_fidelity },
        Criterion { id: 7, name: "throughput (soft)", limit: None, gated: false, run: throughput },
        Criterion { id: 8, name: "determinism", limit: None, gated: true, run: determinism },
    ];
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for c in criteria.iter().filter(|c| wanted.is_empty() || wanted.contains(&c.id)) {
        let start = Instant::now();
        let outcome = (c.run)();
        let elapsed = start.elapsed();
        let outcome = match (outcome, c.limit) {
            (Ok(msg), Some(limit)) if elapsed > limit => Err(format!("{msg}; took {elapsed:.1?}, limit {limit:?}")),
            (o, _) => o,
        };
        match outcome {
            Ok(msg) => println!("PASS criterion {} ({}) [{:.2?}]: {msg}", c.id, c.name, elapsed),
            Err(msg) => {
                println!("FAIL criterion {} ({}) [{:.2?}]: {msg}", c.id, c.name, elapsed);
                if c.gated {
                    failed += 1;
                }
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} gated criteria failed");
        ExitCode::FAILURE
    }
}
