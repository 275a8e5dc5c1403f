//! Mono waveform container and WAV I/O.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

/// A mono waveform with amplitudes in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioClip {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Precondition("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::Precondition(format!("sample {i} is not finite")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn empty(sample_rate: u32) -> Self {
        Self {
            samples: Vec::new(),
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Sample index for a time in seconds. Floors, but snaps values within
    /// 1e-6 of an integer first so that `0.7 * 16000` lands on 11200.
    pub fn time_to_sample(&self, t: f64) -> usize {
        time_to_sample(t, self.sample_rate)
    }

    /// Half-open sample range `[floor(start), floor(end))`.
    pub fn slice_s(&self, start: f64, end: f64) -> Result<&[f32]> {
        let a = self.time_to_sample(start);
        let b = self.time_to_sample(end);
        if start < 0.0 || a > b || b > self.samples.len() {
            return Err(Error::Precondition(format!(
                "interval ({start}, {end}) outside clip of {:.6} s",
                self.duration_s()
            )));
        }
        Ok(&self.samples[a..b])
    }

    pub fn scaled(&self, gain: f32) -> Self {
        Self {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }

    /// Linear-interpolation resampling to `rate`.
    pub fn resample(&self, rate: u32) -> Self {
        if rate == self.sample_rate || self.samples.is_empty() {
            return Self {
                samples: self.samples.clone(),
                sample_rate: rate,
            };
        }
        let n_out = ((self.samples.len() as u64 * rate as u64) / self.sample_rate as u64) as usize;
        Self {
            samples: resample_linear(&self.samples, n_out),
            sample_rate: rate,
        }
    }

    pub fn read_wav(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingAudio(path.to_path_buf()));
        }
        let wav_err = |source| Error::Wav {
            path: path.to_path_buf(),
            source,
        };
        let mut reader = hound::WavReader::open(path).map_err(wav_err)?;
        let spec = reader.spec();
        if spec.channels != 1 {
            return Err(Error::UnsupportedAudio {
                path: path.to_path_buf(),
                message: format!("{} channels, expected mono", spec.channels),
            });
        }
        let samples: Vec<f32> = match spec.sample_format {
            hound::SampleFormat::Float => reader
                .samples::<f32>()
                .collect::<std::result::Result<_, _>>()
                .map_err(wav_err)?,
            hound::SampleFormat::Int => {
                let scale = (1i64 << (spec.bits_per_sample - 1)) as f32;
                reader
                    .samples::<i32>()
                    .map(|s| s.map(|v| v as f32 / scale))
                    .collect::<std::result::Result<_, _>>()
                    .map_err(wav_err)?
            }
        };
        Self::new(samples, spec.sample_rate)
    }

    /// Writes 16-bit PCM mono.
    pub fn write_wav(&self, path: &Path) -> Result<()> {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: self.sample_rate,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let wav_err = |source| Error::Wav {
            path: path.to_path_buf(),
            source,
        };
        let mut writer = hound::WavWriter::create(path, spec).map_err(wav_err)?;
        for &s in &self.samples {
            writer.write_sample(quantize_i16(s)).map_err(wav_err)?;
        }
        writer.finalize().map_err(wav_err)
    }

    /// The clip as it reads back after a 16-bit PCM round trip.
    pub fn quantized(&self) -> Self {
        Self {
            samples: self
                .samples
                .iter()
                .map(|&s| quantize_i16(s) as f32 / 32768.0)
                .collect(),
            sample_rate: self.sample_rate,
        }
    }
}

pub fn time_to_sample(t: f64, sample_rate: u32) -> usize {
    let x = t * sample_rate as f64;
    let r = x.round();
    let x = if (x - r).abs() < 1e-6 { r } else { x.floor() };
    x.max(0.0) as usize
}

fn quantize_i16(s: f32) -> i16 {
    (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Maps `input` onto `n_out` points spanning the same extent, interpolating linearly.
pub fn resample_linear(input: &[f32], n_out: usize) -> Vec<f32> {
    if n_out == 0 || input.is_empty() {
        return Vec::new();
    }
    if n_out == input.len() {
        return input.to_vec();
    }
    if input.len() == 1 || n_out == 1 {
        return vec![input[0]; n_out];
    }
    let step = (input.len() - 1) as f64 / (n_out - 1) as f64;
    (0..n_out)
        .map(|i| {
            let pos = i as f64 * step;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(input.len() - 1);
            let frac = (pos - lo as f64) as f32;
            input[lo] + frac * (input[hi] - input[lo])
        })
        .collect()
}
