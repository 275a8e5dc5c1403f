use crate::audio::AudioClip;
use crate::error::{Error, Result};

/// Concatenates the sample ranges of `keep` (seconds, half-open, floored at
/// both ends). Complementary interval sets therefore partition the clip
/// sample-exactly.
pub fn extract_and_concat(clip: &AudioClip, keep: &[(f64, f64)]) -> Result<AudioClip> {
    let mut out = Vec::new();
    let mut prev_end = 0.0f64;
    for (k, &(start, end)) in keep.iter().enumerate() {
        if !(start.is_finite() && end.is_finite()) || start < 0.0 || end < start {
            return Err(Error::Precondition(format!(
                "keep interval {k} ({start}, {end}) is malformed"
            )));
        }
        if k > 0 && start < prev_end {
            return Err(Error::Precondition(format!(
                "keep interval {k} overlaps its predecessor"
            )));
        }
        out.extend_from_slice(clip.slice_s(start, end)?);
        prev_end = end;
    }
    Ok(AudioClip {
        samples: out,
        sample_rate: clip.sample_rate,
    })
}

/// The complement of `remove` within `[0, duration]`, for `remove` ordered and disjoint.
pub fn complement(remove: &[(f64, f64)], duration: f64) -> Vec<(f64, f64)> {
    let mut keep = Vec::with_capacity(remove.len() + 1);
    let mut cursor = 0.0;
    for &(s, e) in remove {
        if s > cursor {
            keep.push((cursor, s));
        }
        cursor = e;
    }
    if duration > cursor {
        keep.push((cursor, duration));
    }
    keep
}
