//! Objective metrics: WER, DTW mel-cepstral distortion, speaker cosine
//! similarity, region-restricted MCD and MOS error over external score files.

mod mcd;
mod report;
mod wer;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::error::{Error, Result};
use crate::features::{MelExtractor, MelSpectrogram, SpeakerEmbedding};
use crate::postprocess::RegionPair;

pub use mcd::{dct_basis, dtw_path, mcd_dtw, mcd_from_cepstra, mfcc, DEFAULT_MFCC, MCD_K};
pub use report::{comparison_table, EvalReport, MeanScores, UttScores, MOS_PREDICTORS};
pub use wer::{wer, word_errors, WordErrors};

/// Cosine of two unit-norm speaker vectors.
pub fn spk_sim(a: &SpeakerEmbedding, b: &SpeakerEmbedding) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::ShapeMismatch(format!("speaker dims {} vs {}", a.dim(), b.dim())));
    }
    for (n, e) in [("first", a), ("second", b)] {
        if (e.norm() - 1.0).abs() > 1e-6 {
            return Err(Error::Precondition(format!("{n} speaker vector is not unit norm")));
        }
    }
    let dot: f64 = a.vector.iter().zip(&b.vector).map(|(x, y)| x * y).sum();
    Ok(dot.clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreLine {
    pub id: String,
    pub score: f64,
}

/// Reads a JSONL file of `{"id", "score"}` lines.
pub fn read_scores(path: &Path) -> Result<BTreeMap<String, f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeMap::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let s: ScoreLine = serde_json::from_str(line)?;
        if out.insert(s.id.clone(), s.score).is_some() {
            return Err(Error::IdMismatch(format!("{} appears twice in {}", s.id, path.display())));
        }
    }
    Ok(out)
}

/// Per-utterance mean absolute error between generated and reference MOS.
pub fn mae_mos(generated: &BTreeMap<String, f64>, reference: &BTreeMap<String, f64>) -> Result<f64> {
    if generated.len() != reference.len() || generated.keys().any(|k| !reference.contains_key(k)) {
        let only_gen: Vec<&String> = generated.keys().filter(|k| !reference.contains_key(*k)).collect();
        let only_ref: Vec<&String> = reference.keys().filter(|k| !generated.contains_key(*k)).collect();
        return Err(Error::IdMismatch(format!("only generated {only_gen:?}, only reference {only_ref:?}")));
    }
    if generated.is_empty() {
        return Err(Error::EmptyInput("score files"));
    }
    let total: f64 = generated.iter().map(|(k, g)| (g - reference[k]).abs()).sum();
    Ok(total / generated.len() as f64)
}

/// Duration-weighted mean over region pairs of the DTW MCD between the
/// reference stretch (`orig` side) and the hypothesis stretch (`tgt` side).
/// Stretches shorter than one analysis window are skipped.
pub fn region_mcd(
    reference: &AudioClip,
    hypothesis: &AudioClip,
    regions: &[RegionPair],
    extractor: &MelExtractor,
) -> Result<f64> {
    if regions.is_empty() {
        return Err(Error::EmptyInput("region list"));
    }
    let clip = |c: &AudioClip, iv: (f64, f64)| -> Result<AudioClip> { AudioClip::new(c.slice_s(iv.0, iv.1)?.to_vec(), c.sample_rate) };
    let window = extractor.config().win_length;
    let (mut weighted, mut weight) = (0.0, 0.0);
    for r in regions {
        let a = clip(reference, r.orig)?;
        let b = clip(hypothesis, r.tgt)?;
        if a.len() < window || b.len() < window {
            continue;
        }
        let d = mcd_dtw(&extractor.compute(&a)?, &extractor.compute(&b)?)?;
        let w = r.tgt.1 - r.tgt.0;
        weighted += w * d;
        weight += w;
    }
    if weight == 0.0 {
        return Err(Error::EmptyInput("regions longer than one analysis window"));
    }
    Ok(weighted / weight)
}

/// [`region_mcd`] for inputs that only exist as mels. A region keeps the
/// frames whose whole analysis window (`window_s` long) lies inside it, as
/// extracting from the cut audio would.
pub fn region_mcd_mel(
    reference: &MelSpectrogram,
    hypothesis: &MelSpectrogram,
    regions: &[RegionPair],
    window_s: f64,
) -> Result<f64> {
    if regions.is_empty() {
        return Err(Error::EmptyInput("region list"));
    }
    let cut = |m: &MelSpectrogram, (a, b): (f64, f64)| {
        let first = ((a * m.frame_rate_hz - 1e-6).ceil().max(0.0) as usize).min(m.n_frames);
        let end = ((b - window_s) * m.frame_rate_hz + 1e-6).floor() + 1.0;
        let end = (end.max(0.0) as usize).clamp(first, m.n_frames);
        m.slice(first, end)
    };
    let (mut weighted, mut weight) = (0.0, 0.0);
    for r in regions {
        let (a, b) = (cut(reference, r.orig), cut(hypothesis, r.tgt));
        if a.is_empty() || b.is_empty() {
            continue;
        }
        let w = r.tgt.1 - r.tgt.0;
        weighted += w * mcd_dtw(&a, &b)?;
        weight += w;
    }
    if weight == 0.0 {
        return Err(Error::EmptyInput("regions spanning at least one frame"));
    }
    Ok(weighted / weight)
}
