//! Desk-scale oracle corpus: every word is a fixed-duration pure tone with a
//! unique frequency, so alignments are exact by construction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::alignment::AlignedUtterance;
use crate::audio::{AudioClip, DEFAULT_SAMPLE_RATE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_utts: usize,
    /// Inclusive word-count range per utterance.
    pub words_per_utt: (usize, usize),
    pub word_dur_s: f64,
    /// Tone frequency for word `w{k}` is `vocab_hz[k]`.
    pub vocab_hz: Vec<f64>,
    pub amplitude: f32,
    pub sample_rate: u32,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_utts: 20,
            words_per_utt: (6, 9),
            word_dur_s: 0.1,
            vocab_hz: vec![300.0, 480.0, 700.0, 980.0, 1_350.0, 1_800.0, 2_400.0, 3_100.0],
            amplitude: 0.5,
            sample_rate: DEFAULT_SAMPLE_RATE,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.vocab_hz.is_empty() {
            return bad("empty tone vocabulary".into());
        }
        let nyquist = self.sample_rate as f64 / 2.0;
        for (k, &f) in self.vocab_hz.iter().enumerate() {
            if !(f > 0.0 && f < nyquist) {
                return bad(format!("tone {k} at {f} Hz is not below Nyquist {nyquist}"));
            }
            if self.vocab_hz[..k].contains(&f) {
                return bad(format!("tone {k} at {f} Hz is duplicated"));
            }
        }
        let (lo, hi) = self.words_per_utt;
        if lo == 0 || lo > hi {
            return bad(format!("invalid words_per_utt range {lo}..={hi}"));
        }
        if self.word_samples() == 0 {
            return bad("word duration shorter than one sample".into());
        }
        let exact = self.word_dur_s * self.sample_rate as f64;
        if (exact - exact.round()).abs() > 1e-6 {
            return bad("word duration must be a whole number of samples".into());
        }
        if !(self.amplitude > 0.0 && self.amplitude <= 1.0) {
            return bad("amplitude must be in (0, 1]".into());
        }
        Ok(())
    }

    pub fn word_samples(&self) -> usize {
        (self.word_dur_s * self.sample_rate as f64).round() as usize
    }

    pub fn word_name(k: usize) -> String {
        format!("w{k}")
    }

    /// Inverse of [`Self::word_name`] restricted to this vocabulary.
    pub fn word_index(&self, word: &str) -> Option<usize> {
        let k: usize = word.strip_prefix('w')?.parse().ok()?;
        (k < self.vocab_hz.len()).then_some(k)
    }

    /// Renders a word sequence (vocabulary indices) into an utterance.
    pub fn render(&self, id: &str, word_ids: &[usize]) -> Result<AlignedUtterance> {
        let n = self.word_samples();
        let sr = self.sample_rate as f64;
        let mut samples = Vec::with_capacity(n * word_ids.len());
        for &k in word_ids {
            let f = *self
                .vocab_hz
                .get(k)
                .ok_or_else(|| Error::InvalidConfig(format!("word index {k} outside vocabulary")))?;
            samples.extend((0..n).map(|i| {
                self.amplitude * (2.0 * std::f64::consts::PI * f * i as f64 / sr).sin() as f32
            }));
        }
        let intervals = (0..word_ids.len())
            .map(|k| ((k * n) as f64 / sr, ((k + 1) * n) as f64 / sr))
            .collect();
        AlignedUtterance::new(
            id,
            AudioClip::new(samples, self.sample_rate)?,
            word_ids.iter().map(|&k| Self::word_name(k)).collect(),
            intervals,
        )
    }
}

/// Generates `config.n_utts` utterances named `utt0000`, `utt0001`, ...
pub fn generate_synthetic_corpus(config: &SyntheticConfig, seed: u64) -> Result<Vec<AlignedUtterance>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = config.words_per_utt;
    (0..config.n_utts)
        .map(|u| {
            let n_words = rng.random_range(lo..=hi);
            let ids: Vec<usize> = (0..n_words)
                .map(|_| rng.random_range(0..config.vocab_hz.len()))
                .collect();
            config.render(&format!("utt{u:04}"), &ids)
        })
        .collect()
}
