//! Word-aligned utterances and their JSON alignment files.
//!
//! One JSON file per utterance:
//!
//! ```json
//! {"audio": "utt001.wav", "text": "the cat sat",
//!  "words": [{"w": "the", "start": 0.0, "end": 0.21}, ...]}
//! ```
//!
//! The audio path is resolved relative to the JSON file. TextGrid output from
//! a forced aligner is expected to be converted into this shape beforehand.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::error::{Error, Result};
use crate::features::text::normalize_text;

/// Tolerance for interval ends overshooting the audio duration.
const DURATION_SLACK_S: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct AlignedUtterance {
    pub id: String,
    pub audio: AudioClip,
    pub words: Vec<String>,
    /// Per-word `(start_s, end_s)`.
    pub intervals: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlignmentFile {
    pub audio: String,
    pub text: String,
    pub words: Vec<AlignedWord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlignedWord {
    pub w: String,
    pub start: f64,
    pub end: f64,
}

impl AlignedUtterance {
    /// Builds and validates an utterance.
    pub fn new(
        id: impl Into<String>,
        audio: AudioClip,
        words: Vec<String>,
        intervals: Vec<(f64, f64)>,
    ) -> Result<Self> {
        let u = Self {
            id: id.into(),
            audio,
            words,
            intervals,
        };
        u.validate()?;
        Ok(u)
    }

    pub fn validate(&self) -> Result<()> {
        validate_intervals(self.words.len(), &self.intervals)?;
        let duration = self.audio.duration_s();
        for (index, &(start, end)) in self.intervals.iter().enumerate() {
            if start < 0.0 || end > duration + DURATION_SLACK_S {
                return Err(Error::IntervalOutOfRange {
                    index,
                    start,
                    end,
                    duration,
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn text(&self) -> String {
        self.words.join(" ")
    }

    pub fn duration_s(&self) -> f64 {
        self.audio.duration_s()
    }

    pub fn to_file(&self, audio_rel: &str) -> AlignmentFile {
        AlignmentFile {
            audio: audio_rel.to_string(),
            text: self.text(),
            words: self
                .words
                .iter()
                .zip(&self.intervals)
                .map(|(w, &(start, end))| AlignedWord {
                    w: w.clone(),
                    start,
                    end,
                })
                .collect(),
        }
    }

    /// Writes `<dir>/<id>.wav` and `<dir>/<id>.json`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let wav_name = format!("{}.wav", self.id);
        self.audio.write_wav(&dir.join(&wav_name))?;
        let json = serde_json::to_string_pretty(&self.to_file(&wav_name))?;
        let path = dir.join(format!("{}.json", self.id));
        std::fs::write(&path, json).map_err(|e| Error::io(&path, e))
    }
}

fn validate_intervals(n_words: usize, intervals: &[(f64, f64)]) -> Result<()> {
    if n_words != intervals.len() {
        return Err(Error::IntervalCountMismatch {
            words: n_words,
            intervals: intervals.len(),
        });
    }
    for (index, &(start, end)) in intervals.iter().enumerate() {
        if !(start.is_finite() && end.is_finite()) || start >= end {
            return Err(Error::IntervalInverted { index, start, end });
        }
        if index > 0 && start < intervals[index - 1].1 {
            return Err(Error::IntervalOverlap { index });
        }
    }
    Ok(())
}

/// Loads an alignment JSON and its WAV, resampling to `sample_rate`.
pub fn load_alignment(path: &Path, sample_rate: u32) -> Result<AlignedUtterance> {
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: AlignmentFile =
        serde_json::from_str(&raw).map_err(|e| Error::AlignmentSchema {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;

    let transcript: Vec<String> = normalize_text(&file.text)
        .split_whitespace()
        .map(str::to_string)
        .collect();
    if transcript.len() != file.words.len() {
        return Err(Error::IntervalCountMismatch {
            words: transcript.len(),
            intervals: file.words.len(),
        });
    }
    for (index, (entry, expected)) in file.words.iter().zip(&transcript).enumerate() {
        if normalize_text(&entry.w) != *expected {
            return Err(Error::WordMismatch {
                index,
                aligned: entry.w.clone(),
                transcript: expected.clone(),
            });
        }
    }
    let intervals: Vec<(f64, f64)> = file.words.iter().map(|w| (w.start, w.end)).collect();
    validate_intervals(transcript.len(), &intervals)?;

    let audio_path = path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&file.audio);
    let audio = AudioClip::read_wav(&audio_path)?.resample(sample_rate);
    let duration = audio.duration_s();
    for (index, &(start, end)) in intervals.iter().enumerate() {
        if start < 0.0 || end > duration + DURATION_SLACK_S {
            return Err(Error::IntervalOutOfRange {
                index,
                start,
                end,
                duration,
            });
        }
    }
    let intervals = intervals
        .into_iter()
        .map(|(s, e)| (s, e.min(duration)))
        .collect();

    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    AlignedUtterance::new(
        id,
        audio,
        file.words.into_iter().map(|w| w.w).collect(),
        intervals,
    )
}

/// Loads every `*.json` alignment in `dir`, sorted by file name.
pub fn load_corpus_dir(dir: &Path, sample_rate: u32) -> Result<Vec<AlignedUtterance>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| load_alignment(p, sample_rate))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_case(dir: &Path, text: &str, words: &[(&str, f64, f64)], secs: f64) -> std::path::PathBuf {
        let n = (secs * 16_000.0) as usize;
        AudioClip::new(vec![0.1; n], 16_000)
            .unwrap()
            .write_wav(&dir.join("a.wav"))
            .unwrap();
        let file = AlignmentFile {
            audio: "a.wav".into(),
            text: text.into(),
            words: words
                .iter()
                .map(|&(w, start, end)| AlignedWord {
                    w: w.into(),
                    start,
                    end,
                })
                .collect(),
        };
        let path = dir.join("a.json");
        std::fs::write(&path, serde_json::to_string(&file).unwrap()).unwrap();
        path
    }

    #[test]
    fn loads_consistent_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_case(
            dir.path(),
            "one two three",
            &[("one", 0.0, 0.5), ("two", 0.5, 1.0), ("three", 1.0, 1.5)],
            1.5,
        );
        let u = load_alignment(&p, 16_000).unwrap();
        assert_eq!(u.len(), 3);
        assert_eq!(u.audio.len(), 24_000);
        assert_eq!(u.id, "a");
    }

    #[test]
    fn overlap_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_case(dir.path(), "a b", &[("a", 0.0, 0.6), ("b", 0.5, 1.0)], 1.0);
        assert!(matches!(
            load_alignment(&p, 16_000),
            Err(Error::IntervalOverlap { index: 1 })
        ));
    }

    #[test]
    fn count_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_case(
            dir.path(),
            "a b",
            &[("a", 0.0, 0.3), ("b", 0.3, 0.6), ("c", 0.6, 0.9)],
            1.0,
        );
        assert!(matches!(
            load_alignment(&p, 16_000),
            Err(Error::IntervalCountMismatch {
                words: 2,
                intervals: 3
            })
        ));
    }

    #[test]
    fn schema_and_missing_audio_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.json");
        std::fs::write(&p, r#"{"audio": "x.wav", "words": []}"#).unwrap();
        assert!(matches!(
            load_alignment(&p, 16_000),
            Err(Error::AlignmentSchema { .. })
        ));
        std::fs::write(&p, r#"{"audio": "x.wav", "text": "", "words": []}"#).unwrap();
        assert!(matches!(load_alignment(&p, 16_000), Err(Error::MissingAudio(_))));
    }

    #[test]
    fn out_of_range_interval() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_case(dir.path(), "a", &[("a", 0.0, 2.0)], 1.0);
        assert!(matches!(
            load_alignment(&p, 16_000),
            Err(Error::IntervalOutOfRange { .. })
        ));
    }

    #[test]
    fn resamples_to_configured_rate() {
        let dir = tempfile::tempdir().unwrap();
        AudioClip::new(vec![0.0; 8_000], 8_000)
            .unwrap()
            .write_wav(&dir.path().join("a.wav"))
            .unwrap();
        let p = dir.path().join("a.json");
        std::fs::write(
            &p,
            r#"{"audio": "a.wav", "text": "hi", "words": [{"w": "hi", "start": 0.0, "end": 1.0}]}"#,
        )
        .unwrap();
        let u = load_alignment(&p, 16_000).unwrap();
        assert_eq!(u.audio.sample_rate, 16_000);
        assert_eq!(u.audio.len(), 16_000);
    }
}
