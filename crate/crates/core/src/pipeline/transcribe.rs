//! Template transcriber for the tone corpus. It plays the part of the ASR
//! model and the forced aligner on generated mels.

use serde::{Deserialize, Serialize};

use crate::corpus::SyntheticConfig;
use crate::error::{Error, Result};
use crate::features::{MelExtractor, MelSpectrogram};

/// Words with `(start_s, end_s)` intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub words: Vec<String>,
    pub intervals: Vec<(f64, f64)>,
}

impl Transcript {
    pub fn text(&self) -> String {
        self.words.join(" ")
    }
}

pub trait Transcriber {
    fn transcribe(&self, m: &MelSpectrogram) -> Result<Transcript>;
}

/// Nearest-template frame classifier. Runs of one label are split into
/// `round(len / frames_per_word)` words; runs shorter than half a word are
/// dropped.
///
/// A frame within `pure_tol` of its template is taken to lie wholly inside
/// one word. Boundaries between runs are placed midway between the end of
/// the last such frame before and the start of the first one after.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToneTranscriber {
    pub templates: Vec<(String, Vec<f64>)>,
    pub frames_per_word: f64,
    #[serde(default)]
    pub window_s: f64,
    #[serde(default)]
    pub pure_tol: f64,
}

impl ToneTranscriber {
    /// One template per vocabulary word: the mean of the frames of that word
    /// rendered alone, excluding the first and last frame.
    pub fn from_synthetic(config: &SyntheticConfig, extractor: &MelExtractor) -> Result<Self> {
        config.validate()?;
        let mut templates = Vec::with_capacity(config.vocab_hz.len());
        for k in 0..config.vocab_hz.len() {
            let u = config.render("template", &[k])?;
            let m = extractor.compute(&u.audio)?;
            if m.n_frames < 3 {
                return Err(Error::InvalidConfig("word too short for a template".into()));
            }
            let inner = m.slice(1, m.n_frames - 1);
            let mut mean = vec![0.0; m.n_bins];
            for f in inner.frames() {
                mean.iter_mut().zip(f).for_each(|(a, v)| *a += v);
            }
            mean.iter_mut().for_each(|a| *a /= inner.n_frames as f64);
            templates.push((SyntheticConfig::word_name(k), mean));
        }
        let mut min_sep = f64::INFINITY;
        for (i, (_, a)) in templates.iter().enumerate() {
            for (_, b) in &templates[i + 1..] {
                min_sep = min_sep.min(distance(a, b));
            }
        }
        Ok(Self {
            templates,
            frames_per_word: config.word_dur_s * extractor.config().frame_rate_hz(),
            window_s: extractor.config().window_s(),
            pure_tol: if min_sep.is_finite() { 0.1 * min_sep } else { 0.0 },
        })
    }

    fn label(&self, frame: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (i, (_, t)) in self.templates.iter().enumerate() {
            let d = distance(frame, t);
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

impl Transcriber for ToneTranscriber {
    fn transcribe(&self, m: &MelSpectrogram) -> Result<Transcript> {
        if let Some((_, t)) = self.templates.first() {
            if t.len() != m.n_bins {
                return Err(Error::ShapeMismatch(format!("templates have {} bins, mel has {}", t.len(), m.n_bins)));
            }
        }
        let (labels, dists): (Vec<usize>, Vec<f64>) = m.frames().map(|f| self.label(f)).unzip();
        let fr = m.frame_rate_hz;
        let pure = |t: usize| dists[t] <= self.pure_tol;
        let reach = (self.window_s * fr).ceil() as usize + 1;

        // (label, first frame, end frame, words, start s, end s)
        let mut runs = Vec::new();
        let mut start = 0;
        while start < labels.len() {
            let mut end = start;
            while end < labels.len() && labels[end] == labels[start] {
                end += 1;
            }
            let n = ((end - start) as f64 / self.frames_per_word).round() as usize;
            if n > 0 {
                runs.push((labels[start], start, end, n, start as f64 / fr, end as f64 / fr));
            }
            start = end;
        }
        for i in 1..runs.len() {
            let (_, sa, ea, ..) = runs[i - 1];
            let (_, sb, eb, ..) = runs[i];
            let p = (sa.max(ea.saturating_sub(reach))..ea).rev().find(|&t| pure(t));
            let q = (sb..eb.min(sb + reach)).find(|&t| pure(t));
            if let (Some(p), Some(q)) = (p, q) {
                let (lo, hi) = (p as f64 / fr + self.window_s, q as f64 / fr);
                if lo <= hi {
                    let tau = 0.5 * (lo + hi);
                    runs[i - 1].5 = tau;
                    runs[i].4 = tau;
                }
            }
        }
        if let Some(last) = runs.last_mut() {
            if last.2 == labels.len() && self.window_s > 0.0 {
                last.5 = (last.2 - 1) as f64 / fr + self.window_s;
            }
        }

        let mut out = Transcript {
            words: Vec::new(),
            intervals: Vec::new(),
        };
        for (label, _, _, n, a, b) in runs {
            for j in 0..n {
                out.words.push(self.templates[label].0.clone());
                out.intervals.push((a + (b - a) * j as f64 / n as f64, a + (b - a) * (j + 1) as f64 / n as f64));
            }
        }
        Ok(out)
    }
}
