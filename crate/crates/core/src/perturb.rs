//! Temporal noise: local/global frame swaps inside one video, and
//! interleaving/switching across groups of videos.
//!
//! Randomness comes from ChaCha8 streams keyed by SHA-256 of (seed, label),
//! where the label names the video (swaps) or the operation (grouping), so
//! results do not depend on processing order or thread count.

use std::fmt;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::video_io::{Frame, FrameSequence};

#[derive(Debug, Error, PartialEq)]
pub enum PerturbError {
    #[error("video `{id}` has {len} frames, at least 2 are needed")]
    TooShort { id: String, len: usize },
    #[error("need {need} videos of equal length, have {have}")]
    NotEnoughVideos { need: usize, have: usize },
    #[error("videos differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("invalid intensity {intensity} for {kind}")]
    BadIntensity { kind: NoiseKind, intensity: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    LocalSwap,
    GlobalSwap,
    Interleave,
    Switch,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 4] =
        [NoiseKind::LocalSwap, NoiseKind::GlobalSwap, NoiseKind::Interleave, NoiseKind::Switch];

    /// The five preset intensities, mildest first: swapped-frame fractions for
    /// the swap kinds, videos per group for interleave and switch.
    pub fn presets(&self) -> [f64; 5] {
        match self {
            NoiseKind::LocalSwap => [0.1, 0.2, 0.4, 0.6, 0.8],
            NoiseKind::GlobalSwap => [0.1, 0.2, 0.3, 0.4, 0.5],
            NoiseKind::Interleave | NoiseKind::Switch => [2.0, 3.0, 4.0, 5.0, 6.0],
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            NoiseKind::LocalSwap => "local_swap",
            NoiseKind::GlobalSwap => "global_swap",
            NoiseKind::Interleave => "interleave",
            NoiseKind::Switch => "switch",
        }
    }

    pub fn is_swap(&self) -> bool {
        matches!(self, NoiseKind::LocalSwap | NoiseKind::GlobalSwap)
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NoiseKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        NoiseKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown noise kind `{s}` (expected local_swap, global_swap, interleave or switch)"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    /// Fraction in (0, 1] for swaps, group size >= 2 for interleave/switch.
    /// Zero means "no perturbation" for every kind.
    pub intensity: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<(), PerturbError> {
        let ok = if self.intensity == 0.0 {
            true
        } else if self.kind.is_swap() {
            self.intensity > 0.0 && self.intensity <= 1.0
        } else {
            self.intensity >= 2.0 && self.intensity.fract() == 0.0
        };
        if ok {
            Ok(())
        } else {
            Err(PerturbError::BadIntensity { kind: self.kind, intensity: self.intensity })
        }
    }

    /// Applies the noise to a whole set; output order follows input order.
    pub fn apply(&self, videos: &[FrameSequence]) -> Result<Vec<FrameSequence>, PerturbError> {
        self.validate()?;
        if self.intensity == 0.0 {
            return Ok(videos.to_vec());
        }
        match self.kind {
            NoiseKind::LocalSwap => videos.iter().map(|v| local_swap(v, self.intensity, self.seed)).collect(),
            NoiseKind::GlobalSwap => videos.iter().map(|v| global_swap(v, self.intensity, self.seed)).collect(),
            NoiseKind::Interleave => interleave(videos, self.intensity as usize, self.seed),
            NoiseKind::Switch => switch(videos, self.intensity as usize, self.seed),
        }
    }
}

/// Independent RNG stream for (seed, label).
pub fn stream(seed: u64, label: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    let digest = h.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

fn check_len(seq: &FrameSequence) -> Result<usize, PerturbError> {
    let len = seq.len();
    if len < 2 {
        return Err(PerturbError::TooShort { id: seq.id().to_string(), len });
    }
    Ok(len)
}

/// Swaps frame pairs (s, s + 1) for every start `s`; starts must not overlap.
pub fn apply_adjacent_swaps(seq: &FrameSequence, starts: &[usize]) -> FrameSequence {
    let mut frames = seq.frames().to_vec();
    for &s in starts {
        frames.swap(s, s + 1);
    }
    FrameSequence::new(seq.id(), frames).expect("reordering keeps frames consistent")
}

/// Swaps ⌊p·L/2⌋ disjoint adjacent pairs chosen uniformly among all
/// non-overlapping placements.
pub fn local_swap(seq: &FrameSequence, p: f64, seed: u64) -> Result<FrameSequence, PerturbError> {
    let len = check_len(seq)?;
    let pairs = (p * len as f64 / 2.0).floor() as usize;
    if pairs == 0 {
        return Ok(seq.clone());
    }
    let mut rng = stream(seed, &format!("local_swap/{}", seq.id()));
    // Placements of m dominoes in L cells correspond one-to-one with m-subsets
    // of L - m slots: start_i = slot_i + i for sorted slots.
    let mut slots = index::sample(&mut rng, len - pairs, pairs).into_vec();
    slots.sort_unstable();
    let starts: Vec<usize> = slots.iter().enumerate().map(|(i, &s)| s + i).collect();
    Ok(apply_adjacent_swaps(seq, &starts))
}

/// Swaps ⌊p·L⌋ distinct source frames, each with a uniformly random partner.
pub fn global_swap(seq: &FrameSequence, p: f64, seed: u64) -> Result<FrameSequence, PerturbError> {
    let len = check_len(seq)?;
    let count = ((p * len as f64).floor() as usize).min(len);
    if count == 0 {
        return Ok(seq.clone());
    }
    let mut rng = stream(seed, &format!("global_swap/{}", seq.id()));
    let sources = index::sample(&mut rng, len, count).into_vec();
    let mut frames = seq.frames().to_vec();
    for src in sources {
        let partner = rng.random_range(0..len);
        frames.swap(src, partner);
    }
    Ok(FrameSequence::new(seq.id(), frames).expect("reordering keeps frames consistent"))
}

/// Random disjoint groups of `n` video indices; leftovers are not grouped.
fn groups(count: usize, n: usize, seed: u64, label: &str) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..count).collect();
    order.shuffle(&mut stream(seed, label));
    order.chunks_exact(n).map(|c| c.to_vec()).collect()
}

fn check_group_input(seqs: &[FrameSequence], n: usize) -> Result<usize, PerturbError> {
    if n < 2 || seqs.len() < n {
        return Err(PerturbError::NotEnoughVideos { need: n.max(2), have: seqs.len() });
    }
    let len = seqs[0].len();
    if let Some(other) = seqs.iter().find(|s| s.len() != len) {
        return Err(PerturbError::LengthMismatch(len, other.len()));
    }
    Ok(len)
}

/// Builds one output per group member from a frame-source rule, writing each
/// output back at its member's position; ungrouped videos pass through.
fn regroup(
    seqs: &[FrameSequence],
    n: usize,
    seed: u64,
    label: &str,
    source_of: impl Fn(usize, usize) -> usize,
) -> Result<Vec<FrameSequence>, PerturbError> {
    let len = check_group_input(seqs, n)?;
    let mut out = seqs.to_vec();
    for group in groups(seqs.len(), n, seed, label) {
        for (o, &slot) in group.iter().enumerate() {
            let frames: Vec<Frame> =
                (0..len).map(|t| seqs[group[source_of(o, t)]].frames()[t].clone()).collect();
            let id = format!("{}~{label}{n}", seqs[slot].id());
            out[slot] = FrameSequence::new(id, frames).expect("group members share frame shape");
        }
    }
    Ok(out)
}

/// Round-robin weave: output `o`, frame `t` is member `(o + t) mod n`, frame `t`.
pub fn interleave(seqs: &[FrameSequence], n: usize, seed: u64) -> Result<Vec<FrameSequence>, PerturbError> {
    regroup(seqs, n, seed, "interleave", |o, t| interleave_source(o, t, n))
}

fn interleave_source(o: usize, t: usize, n: usize) -> usize {
    (o + t) % n
}

/// Frame range of chunk `c` when `len` frames are split into `n` floor-bounded chunks.
pub fn chunk_bounds(c: usize, n: usize, len: usize) -> (usize, usize) {
    (c * len / n, (c + 1) * len / n)
}

/// Output `i` is n contiguous time chunks, chunk `c` taken from member `(i + c) mod n`.
pub fn switch(seqs: &[FrameSequence], n: usize, seed: u64) -> Result<Vec<FrameSequence>, PerturbError> {
    let len = seqs.first().map(|s| s.len()).unwrap_or(0);
    regroup(seqs, n, seed, "switch", |o, t| switch_source(o, t, n, len))
}

fn switch_source(o: usize, t: usize, n: usize, len: usize) -> usize {
    let chunk = (0..n).find(|&c| t < chunk_bounds(c, n, len).1).unwrap_or(n - 1);
    (o + chunk) % n
}
