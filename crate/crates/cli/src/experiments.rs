//! Sanity-check and temporal-noise sensitivity sweeps.

use std::collections::BTreeMap;

use fvmd_core::frechet::fit_gaussian_rows;
use fvmd_core::perturb::stream;
use fvmd_core::synth::{generate_video, SynthConfig};
use fvmd_core::video_io::preprocess;
use fvmd_core::{
    extract_feature, fit_gaussian, frechet_distance, FrameSequence, GaussianStats64, MotionFeature64, NoiseKind,
    NoiseSpec,
};
use log::info;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::pipeline::{canonical_grid, timed, track_preprocessed};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    Same,
    Cross,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SanityRow {
    pub size: usize,
    pub repeat: usize,
    pub comparison: Comparison,
    pub score: f64,
    pub n_gen: usize,
    pub n_ref: usize,
}

/// Mean scores per size over repeats.
#[derive(Clone, Debug, PartialEq)]
pub struct SanitySummary {
    pub size: usize,
    pub same: f64,
    pub cross: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub kind: NoiseKind,
    pub intensity: f64,
    pub score: f64,
    pub n_gen: usize,
    pub n_ref: usize,
}

/// Features of every clip of every video, in video order.
pub fn features_of_sequences(seqs: &[FrameSequence], config: &RunConfig) -> Result<Vec<Vec<MotionFeature64>>, CliError> {
    let grid = canonical_grid(config)?;
    let feature_config = config.feature_config();
    seqs.par_iter()
        .map(|seq| {
            track_preprocessed(seq, config, &grid)?
                .iter()
                .map(|t| extract_feature(&t.cast::<f64>(), &feature_config).map_err(CliError::from))
                .collect()
        })
        .collect()
}

/// Generates, tracks and featurizes `count` synthetic videos without keeping
/// their frames around.
pub fn synthetic_features(
    synth: &SynthConfig,
    count: usize,
    seed: u64,
    config: &RunConfig,
) -> Result<Vec<MotionFeature64>, CliError> {
    let per_video: Vec<Vec<MotionFeature64>> = (0..count)
        .into_par_iter()
        .map(|i| {
            let video = preprocess(&generate_video(synth, &format!("video_{i:05}"), seed));
            features_of_sequences(std::slice::from_ref(&video), config).map(|mut v| v.remove(0))
        })
        .collect::<Result<_, _>>()?;
    Ok(per_video.into_iter().flatten().collect())
}

fn shuffled(len: usize, seed: u64, label: &str) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..len).collect();
    idx.shuffle(&mut stream(seed, label));
    idx
}

fn fit_subset(features: &[MotionFeature64], idx: &[usize]) -> Result<GaussianStats64, CliError> {
    let rows: Vec<&[f64]> = idx.iter().map(|&i| features[i].data()).collect();
    Ok(fit_gaussian_rows(&rows)?)
}

fn check_compatible(a: &[MotionFeature64], b: &[MotionFeature64]) -> Result<(), CliError> {
    if let (Some(x), Some(y)) = (a.first(), b.first()) {
        if x.len() != y.len() || x.fields() != y.fields() || x.hist() != y.hist() {
            return Err(CliError::Incompatible(format!(
                "features differ: {} {}-{} vs {} {}-{}",
                x.len(),
                x.fields(),
                x.hist(),
                y.len(),
                y.fields(),
                y.hist()
            )));
        }
    }
    Ok(())
}

/// For every repeat and size, compares two disjoint random subsets of `a`
/// ("same") and, when `b` is given, a subset of `a` against one of `b` ("cross").
/// Subsets of one repeat are nested prefixes of that repeat's shuffle.
pub fn sanity_scores(
    a: &[MotionFeature64],
    b: Option<&[MotionFeature64]>,
    sizes: &[usize],
    repeats: usize,
    seed: u64,
    eps: f64,
) -> Result<Vec<SanityRow>, CliError> {
    if sizes.is_empty() || repeats == 0 {
        return Err(CliError::Usage("sanity needs at least one size and one repeat".into()));
    }
    if let Some(&s) = sizes.iter().find(|&&s| s < 2) {
        return Err(CliError::Usage(format!("subset size {s} is below 2")));
    }
    let largest = *sizes.iter().max().expect("non-empty");
    if 2 * largest > a.len() {
        return Err(CliError::Insufficient(format!(
            "size {largest} needs {} clips for two disjoint subsets, dataset has {}",
            2 * largest,
            a.len()
        )));
    }
    if let Some(b) = b {
        check_compatible(a, b)?;
        if largest > b.len() {
            return Err(CliError::Insufficient(format!("size {largest} exceeds the {} clips of the cross dataset", b.len())));
        }
    }

    let tasks: Vec<(usize, usize)> = (0..repeats).flat_map(|r| sizes.iter().map(move |&s| (r, s))).collect();
    let rows: Vec<Vec<SanityRow>> = tasks
        .par_iter()
        .map(|&(repeat, size)| {
            let perm_a = shuffled(a.len(), seed, &format!("sanity/same/{repeat}"));
            let gen = fit_subset(a, &perm_a[..size])?;
            let same = fit_subset(a, &perm_a[size..2 * size])?;
            let row = |comparison, score: f64| SanityRow { size, repeat, comparison, score, n_gen: size, n_ref: size };
            let mut out = vec![row(Comparison::Same, frechet_distance(&gen, &same, eps)?.value)];
            if let Some(b) = b {
                let perm_b = shuffled(b.len(), seed, &format!("sanity/cross/{repeat}"));
                let cross = fit_subset(b, &perm_b[..size])?;
                out.push(row(Comparison::Cross, frechet_distance(&gen, &cross, eps)?.value));
            }
            Ok(out)
        })
        .collect::<Result<_, CliError>>()?;
    Ok(rows.into_iter().flatten().collect())
}

pub fn summarize_sanity(rows: &[SanityRow]) -> Vec<SanitySummary> {
    let mut acc: BTreeMap<(usize, Comparison), (f64, usize)> = BTreeMap::new();
    for r in rows {
        let e = acc.entry((r.size, r.comparison)).or_insert((0.0, 0));
        e.0 += r.score;
        e.1 += 1;
    }
    let mean = |k| acc.get(&k).map(|&(s, n): &(f64, usize)| s / n as f64);
    let mut sizes: Vec<usize> = rows.iter().map(|r| r.size).collect();
    sizes.sort_unstable();
    sizes.dedup();
    sizes
        .into_iter()
        .map(|size| SanitySummary {
            size,
            same: mean((size, Comparison::Same)).unwrap_or(f64::NAN),
            cross: mean((size, Comparison::Cross)),
        })
        .collect()
}

fn unchanged(a: &FrameSequence, b: &FrameSequence) -> bool {
    a.len() == b.len() && a.frames().iter().zip(b.frames()).all(|(x, y)| x.shares_buffer(y))
}

/// FVMD(perturbed, clean) for each noise kind at its preset intensities (and
/// at zero when `include_zero` is set). Videos the noise left untouched reuse
/// their clean features.
pub fn sensitivity_scores(
    videos: &[FrameSequence],
    kinds: &[NoiseKind],
    include_zero: bool,
    config: &RunConfig,
) -> Result<Vec<SensitivityRow>, CliError> {
    let clean: Vec<FrameSequence> = videos.par_iter().map(preprocess).collect();
    let (clean_features, t) = timed(|| features_of_sequences(&clean, config));
    let clean_features = clean_features?;
    info!("clean set: {} videos featurized in {:.1}s", clean.len(), t.as_secs_f64());
    let flat: Vec<MotionFeature64> = clean_features.iter().flatten().cloned().collect();
    let clean_stats = fit_gaussian(&flat)?;

    let mut rows = Vec::new();
    for &kind in kinds {
        let intensities = include_zero.then_some(0.0).into_iter().chain(kind.presets());
        for intensity in intensities {
            let spec = NoiseSpec { kind, intensity, seed: config.seed };
            let (result, t) = timed(|| -> Result<_, CliError> {
                let perturbed = spec.apply(&clean)?;
                let per_video: Vec<(Vec<MotionFeature64>, bool)> = perturbed
                    .par_iter()
                    .zip(clean.par_iter().zip(clean_features.par_iter()))
                    .map(|(p, (c, cf))| {
                        if unchanged(p, c) {
                            Ok((cf.clone(), false))
                        } else {
                            features_of_sequences(std::slice::from_ref(p), config).map(|mut v| (v.remove(0), true))
                        }
                    })
                    .collect::<Result<_, CliError>>()?;
                let retracked = per_video.iter().filter(|(_, r)| *r).count();
                let flat: Vec<MotionFeature64> = per_video.into_iter().flat_map(|(f, _)| f).collect();
                Ok((fit_gaussian(&flat)?, retracked))
            });
            let (perturbed_stats, retracked) = result?;
            let score = frechet_distance(&perturbed_stats, &clean_stats, config.eps)?;
            info!("{kind} {intensity}: {:.4} ({retracked} videos re-tracked, {:.1}s)", score.value, t.as_secs_f64());
            rows.push(SensitivityRow { kind, intensity, score: score.value, n_gen: score.n_gen, n_ref: score.n_ref });
        }
    }
    Ok(rows)
}
