//! Speaker conditioning vectors.

use serde::{Deserialize, Serialize};

use super::mel::MelSpectrogram;
use crate::error::{Error, Result};

/// Unit-norm speaker vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerEmbedding {
    pub vector: Vec<f64>,
}

impl SpeakerEmbedding {
    /// Normalises `raw` to unit length.
    pub fn from_raw(raw: Vec<f64>) -> Result<Self> {
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::Precondition("speaker vector has zero or non-finite norm".into()));
        }
        Ok(Self {
            vector: raw.into_iter().map(|v| v / norm).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    pub fn norm(&self) -> f64 {
        self.vector.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Anything that maps a mel spectrogram to a speaker vector.
pub trait SpeakerEmbedder {
    fn embed(&self, m: &MelSpectrogram) -> Result<SpeakerEmbedding>;
}

/// Time-mean of the log-mel frames, unit-normalised. `D_spk` equals the bin count.
#[derive(Debug, Clone, Copy, Default)]
pub struct MelMeanEmbedder;

impl SpeakerEmbedder for MelMeanEmbedder {
    fn embed(&self, m: &MelSpectrogram) -> Result<SpeakerEmbedding> {
        speaker_embed(m)
    }
}

pub fn speaker_embed(m: &MelSpectrogram) -> Result<SpeakerEmbedding> {
    if m.n_frames == 0 {
        return Err(Error::EmptyInput("speaker embedding needs at least one frame"));
    }
    let mut mean = vec![0.0; m.n_bins];
    for frame in m.frames() {
        for (acc, v) in mean.iter_mut().zip(frame) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= m.n_frames as f64);
    SpeakerEmbedding::from_raw(mean)
}
