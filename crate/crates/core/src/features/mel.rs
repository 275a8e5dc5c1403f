//! Log-mel front end.
//!
//! Frames are taken without edge padding: a clip of `n` samples yields
//! `1 + (n - win) / hop` frames, and clips shorter than one window are
//! rejected.

use std::sync::Arc;

use rustfft::{num_complex::Complex, Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MelConfig {
    pub sample_rate: u32,
    pub win_length: usize,
    pub hop_length: usize,
    pub n_fft: usize,
    pub n_mels: usize,
    pub f_min: f64,
    pub f_max: f64,
    /// Power floor applied before the natural log.
    pub floor: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            win_length: 400,
            hop_length: 160,
            n_fft: 512,
            n_mels: 80,
            f_min: 0.0,
            f_max: 8_000.0,
            floor: 1e-5,
        }
    }
}

impl MelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("mel: {m}")));
        if self.win_length == 0 || self.hop_length == 0 || self.n_mels == 0 {
            return bad("window, hop and bin count must be positive");
        }
        if self.n_fft < self.win_length {
            return bad("n_fft must cover the window");
        }
        if !(self.f_min >= 0.0 && self.f_min < self.f_max && self.f_max <= self.sample_rate as f64 / 2.0) {
            return bad("need 0 <= f_min < f_max <= nyquist");
        }
        if self.floor <= 0.0 {
            return bad("floor must be positive");
        }
        Ok(())
    }

    pub fn frame_rate_hz(&self) -> f64 {
        self.sample_rate as f64 / self.hop_length as f64
    }

    pub fn window_s(&self) -> f64 {
        self.win_length as f64 / self.sample_rate as f64
    }

    pub fn log_floor(&self) -> f64 {
        self.floor.ln()
    }

    pub fn id(&self) -> String {
        format!(
            "logmel-sr{}-win{}-hop{}-fft{}-mels{}-{}to{}hz-floor{:e}",
            self.sample_rate,
            self.win_length,
            self.hop_length,
            self.n_fft,
            self.n_mels,
            self.f_min,
            self.f_max,
            self.floor
        )
    }

    /// Frame count for `n_samples`; `None` below one window.
    pub fn n_frames(&self, n_samples: usize) -> Option<usize> {
        (n_samples >= self.win_length).then(|| 1 + (n_samples - self.win_length) / self.hop_length)
    }

    /// Sample index where frame `t` starts.
    pub fn frame_start(&self, t: usize) -> usize {
        t * self.hop_length
    }
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// `T x B` log-mel energies, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MelSpectrogram {
    pub n_frames: usize,
    pub n_bins: usize,
    pub frame_rate_hz: f64,
    pub config_id: String,
    pub data: Vec<f64>,
}

impl MelSpectrogram {
    pub fn from_frames(
        frames: &[Vec<f64>],
        n_bins: usize,
        frame_rate_hz: f64,
        config_id: impl Into<String>,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(frames.len() * n_bins);
        for (t, f) in frames.iter().enumerate() {
            if f.len() != n_bins {
                return Err(Error::ShapeMismatch(format!(
                    "frame {t} has {} bins, expected {n_bins}",
                    f.len()
                )));
            }
            data.extend_from_slice(f);
        }
        Self::from_data(data, n_bins, frame_rate_hz, config_id)
    }

    pub fn from_data(
        data: Vec<f64>,
        n_bins: usize,
        frame_rate_hz: f64,
        config_id: impl Into<String>,
    ) -> Result<Self> {
        if n_bins == 0 || data.len() % n_bins != 0 {
            return Err(Error::ShapeMismatch(format!(
                "{} values do not form rows of {n_bins}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Precondition("mel entries must be finite".into()));
        }
        Ok(Self {
            n_frames: data.len() / n_bins,
            n_bins,
            frame_rate_hz,
            config_id: config_id.into(),
            data,
        })
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.n_bins..(t + 1) * self.n_bins]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_bins)
    }

    pub fn is_empty(&self) -> bool {
        self.n_frames == 0
    }

    /// Frames `start..end`.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        Self {
            n_frames: end - start,
            n_bins: self.n_bins,
            frame_rate_hz: self.frame_rate_hz,
            config_id: self.config_id.clone(),
            data: self.data[start * self.n_bins..end * self.n_bins].to_vec(),
        }
    }

    /// Replicates the last frame until the frame count is a multiple of `r`.
    pub fn pad_to_multiple(&self, r: usize) -> Self {
        let mut out = self.clone();
        if r == 0 || self.n_frames == 0 {
            return out;
        }
        let target = self.n_frames.div_ceil(r) * r;
        let last = self.frame(self.n_frames - 1).to_vec();
        for _ in self.n_frames..target {
            out.data.extend_from_slice(&last);
        }
        out.n_frames = target;
        out
    }

    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.n_bins != other.n_bins {
            return Err(Error::ShapeMismatch(format!(
                "cannot concatenate {} and {} bins",
                self.n_bins, other.n_bins
            )));
        }
        let mut out = self.clone();
        out.data.extend_from_slice(&other.data);
        out.n_frames += other.n_frames;
        Ok(out)
    }

    /// Mean absolute difference over all entries.
    pub fn mean_abs_diff(&self, other: &Self) -> Result<f64> {
        if self.n_bins != other.n_bins || self.n_frames != other.n_frames {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} vs {}x{}",
                self.n_frames, self.n_bins, other.n_frames, other.n_bins
            )));
        }
        if self.data.is_empty() {
            return Err(Error::EmptyInput("mel spectrogram"));
        }
        let total: f64 = self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).sum();
        Ok(total / self.data.len() as f64)
    }
}

/// Precomputed window, filterbank and FFT plan.
pub struct MelExtractor {
    config: MelConfig,
    window: Vec<f64>,
    /// Per mel bin: (first fft bin, weights).
    filters: Vec<(usize, Vec<f64>)>,
    fft: Arc<dyn Fft<f64>>,
}

impl MelExtractor {
    pub fn new(config: MelConfig) -> Result<Self> {
        config.validate()?;
        let n = config.win_length;
        let window = (0..n)
            .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
            .collect();
        let filters = build_filterbank(&config);
        let fft = FftPlanner::new().plan_fft_forward(config.n_fft);
        Ok(Self {
            config,
            window,
            filters,
            fft,
        })
    }

    pub fn config(&self) -> &MelConfig {
        &self.config
    }

    pub fn compute(&self, clip: &AudioClip) -> Result<MelSpectrogram> {
        let cfg = &self.config;
        if clip.sample_rate != cfg.sample_rate {
            return Err(Error::Precondition(format!(
                "clip at {} Hz, mel configured for {} Hz",
                clip.sample_rate, cfg.sample_rate
            )));
        }
        let n_frames = cfg.n_frames(clip.len()).ok_or(Error::ClipTooShort {
            samples: clip.len(),
            window: cfg.win_length,
        })?;
        let n_spec = cfg.n_fft / 2 + 1;
        let mut buf = vec![Complex::new(0.0, 0.0); cfg.n_fft];
        let mut power = vec![0.0; n_spec];
        let mut data = Vec::with_capacity(n_frames * cfg.n_mels);
        let log_floor = cfg.log_floor();
        for t in 0..n_frames {
            let start = cfg.frame_start(t);
            for (k, slot) in buf.iter_mut().enumerate() {
                *slot = if k < cfg.win_length {
                    Complex::new(clip.samples[start + k] as f64 * self.window[k], 0.0)
                } else {
                    Complex::new(0.0, 0.0)
                };
            }
            self.fft.process(&mut buf);
            for (p, c) in power.iter_mut().zip(&buf) {
                *p = c.norm_sqr();
            }
            for (first, weights) in &self.filters {
                let e: f64 = weights
                    .iter()
                    .zip(&power[*first..])
                    .map(|(w, p)| w * p)
                    .sum();
                data.push(if e > cfg.floor { e.ln() } else { log_floor });
            }
        }
        MelSpectrogram::from_data(data, cfg.n_mels, cfg.frame_rate_hz(), cfg.id())
    }
}

/// Triangular HTK-mel filters; no area normalisation.
fn build_filterbank(cfg: &MelConfig) -> Vec<(usize, Vec<f64>)> {
    let n_spec = cfg.n_fft / 2 + 1;
    let (m_lo, m_hi) = (hz_to_mel(cfg.f_min), hz_to_mel(cfg.f_max));
    let points: Vec<f64> = (0..cfg.n_mels + 2)
        .map(|i| mel_to_hz(m_lo + (m_hi - m_lo) * i as f64 / (cfg.n_mels + 1) as f64))
        .collect();
    let bin_hz = cfg.sample_rate as f64 / cfg.n_fft as f64;
    (0..cfg.n_mels)
        .map(|m| {
            let (lo, center, hi) = (points[m], points[m + 1], points[m + 2]);
            let weights: Vec<(usize, f64)> = (0..n_spec)
                .filter_map(|k| {
                    let f = k as f64 * bin_hz;
                    let w = if f > lo && f <= center {
                        (f - lo) / (center - lo)
                    } else if f > center && f < hi {
                        (hi - f) / (hi - center)
                    } else {
                        0.0
                    };
                    (w > 0.0).then_some((k, w))
                })
                .collect();
            match weights.first() {
                Some(&(first, _)) => (first, weights.iter().map(|&(_, w)| w).collect()),
                None => (0, Vec::new()),
            }
        })
        .collect()
}

/// One-shot convenience wrapper around [`MelExtractor`].
pub fn mel(clip: &AudioClip, config: &MelConfig) -> Result<MelSpectrogram> {
    MelExtractor::new(config.clone())?.compute(clip)
}
