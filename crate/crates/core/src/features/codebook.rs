//! Seeded k-means quantizer turning downsampled mel frames into discrete
//! semantic tokens.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mel::MelSpectrogram;
use crate::error::{Error, Result};

pub const CODEBOOK_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CodebookConfig {
    /// Number of centroids (`V_s`).
    pub size: usize,
    /// Frames averaged per token.
    pub downsample: usize,
    pub iterations: usize,
}

impl Default for CodebookConfig {
    fn default() -> Self {
        Self {
            size: 16,
            downsample: 2,
            iterations: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SemanticTokenSeq {
    pub ids: Vec<u32>,
    pub token_rate_hz: f64,
}

impl SemanticTokenSeq {
    pub fn new(ids: Vec<u32>, token_rate_hz: f64) -> Self {
        Self { ids, token_rate_hz }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

// f64 token rates are always finite here
impl Eq for SemanticTokenSeq {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    pub version: u32,
    pub downsample: usize,
    pub seed: u64,
    pub iterations: usize,
    pub mel_config_id: String,
    /// Inertia after each assignment step.
    pub inertia: Vec<f64>,
    /// Centroid `k` is the vector for token id `k`.
    pub centroids: Vec<Vec<f64>>,
}

impl Codebook {
    pub fn size(&self) -> usize {
        self.centroids.len()
    }

    pub fn dim(&self) -> usize {
        self.centroids.first().map_or(0, Vec::len)
    }

    /// Builds a codebook from `(label, centroid)` pairs in any storage order.
    pub fn from_labeled(mut entries: Vec<(u32, Vec<f64>)>, downsample: usize) -> Result<Self> {
        entries.sort_by_key(|(label, _)| *label);
        for (k, (label, c)) in entries.iter().enumerate() {
            if *label as usize != k {
                return Err(Error::InvalidConfig(format!(
                    "codebook labels must be 0..{}, found {label}",
                    entries.len()
                )));
            }
            if c.len() != entries[0].1.len() || c.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidConfig(format!("centroid {k} malformed")));
            }
        }
        Ok(Self {
            version: CODEBOOK_FORMAT_VERSION,
            downsample,
            seed: 0,
            iterations: 0,
            mel_config_id: String::new(),
            inertia: Vec::new(),
            centroids: entries.into_iter().map(|(_, c)| c).collect(),
        })
    }

    /// Nearest centroid by Euclidean distance; ties go to the lowest id.
    pub fn nearest(&self, v: &[f64]) -> (u32, f64) {
        let mut best = (0u32, f64::INFINITY);
        for (k, c) in self.centroids.iter().enumerate() {
            let d = sq_dist(v, c);
            if d < best.1 {
                best = (k as u32, d);
            }
        }
        best
    }

    pub fn tokenize(&self, m: &MelSpectrogram) -> Result<SemanticTokenSeq> {
        tokenize_speech(m, self, self.downsample)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cb: Codebook = serde_json::from_str(&raw)?;
        if cb.version != CODEBOOK_FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "codebook format version {} unsupported",
                cb.version
            )));
        }
        Ok(cb)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Averages consecutive blocks of `r` frames; a trailing partial block
/// averages what is there, giving `ceil(T / r)` vectors.
pub fn downsample_frames(m: &MelSpectrogram, r: usize) -> Vec<Vec<f64>> {
    m.data
        .chunks(r * m.n_bins)
        .map(|block| {
            let n = block.len() / m.n_bins;
            let mut acc = vec![0.0; m.n_bins];
            for frame in block.chunks_exact(m.n_bins) {
                for (a, v) in acc.iter_mut().zip(frame) {
                    *a += v;
                }
            }
            acc.iter_mut().for_each(|a| *a /= n as f64);
            acc
        })
        .collect()
}

pub fn tokenize_speech(m: &MelSpectrogram, cb: &Codebook, r: usize) -> Result<SemanticTokenSeq> {
    if r == 0 {
        return Err(Error::InvalidConfig("downsample factor must be positive".into()));
    }
    if m.n_bins != cb.dim() {
        return Err(Error::ShapeMismatch(format!(
            "mel has {} bins, codebook dimension {}",
            m.n_bins,
            cb.dim()
        )));
    }
    let ids = downsample_frames(m, r)
        .iter()
        .map(|v| cb.nearest(v).0)
        .collect();
    Ok(SemanticTokenSeq::new(ids, m.frame_rate_hz / r as f64))
}

/// k-means++ seeding followed by a fixed number of Lloyd iterations.
pub fn fit_codebook(mels: &[MelSpectrogram], config: &CodebookConfig, seed: u64) -> Result<Codebook> {
    if config.size == 0 || config.downsample == 0 {
        return Err(Error::InvalidConfig("codebook size and downsample must be positive".into()));
    }
    let points: Vec<Vec<f64>> = mels
        .iter()
        .flat_map(|m| downsample_frames(m, config.downsample))
        .collect();
    if points.len() < config.size {
        return Err(Error::Infeasible(format!(
            "{} frames available for a codebook of {}",
            points.len(),
            config.size
        )));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::ShapeMismatch("mels disagree on bin count".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < config.size {
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            return Err(Error::Infeasible(format!(
                "only {} distinct frames for a codebook of {}",
                centroids.len(),
                config.size
            )));
        }
        let mut target = rng.random::<f64>() * total;
        let mut pick = d2.iter().rposition(|&d| d > 0.0).unwrap_or(0);
        for (i, &d) in d2.iter().enumerate() {
            if d > 0.0 && target < d {
                pick = i;
                break;
            }
            target -= d;
        }
        let c = points[pick].clone();
        for (slot, p) in d2.iter_mut().zip(&points) {
            *slot = slot.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }

    let mut cb = Codebook {
        version: CODEBOOK_FORMAT_VERSION,
        downsample: config.downsample,
        seed,
        iterations: config.iterations,
        mel_config_id: mels[0].config_id.clone(),
        inertia: Vec::with_capacity(config.iterations),
        centroids,
    };
    for _ in 0..config.iterations {
        let assigned: Vec<(u32, f64)> = points.par_iter().map(|p| cb.nearest(p)).collect();
        cb.inertia.push(assigned.iter().map(|a| a.1).sum());
        let mut sums = vec![vec![0.0; dim]; config.size];
        let mut counts = vec![0usize; config.size];
        for (p, &(k, _)) in points.iter().zip(&assigned) {
            counts[k as usize] += 1;
            for (s, v) in sums[k as usize].iter_mut().zip(p) {
                *s += v;
            }
        }
        for ((c, s), &n) in cb.centroids.iter_mut().zip(sums).zip(&counts) {
            if n > 0 {
                *c = s.into_iter().map(|v| v / n as f64).collect();
            }
        }
    }
    Ok(cb)
}
