//! Pasting unedited stretches of the original recording back into an edited
//! waveform.

use serde::{Deserialize, Serialize};

use crate::audio::{resample_linear, AudioClip};
use crate::corpus::{AlignedUtterance, EditOp, EditScript};
use crate::error::{Error, Result};

/// One maximal run of kept words, as time intervals on both sides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionPair {
    pub orig: (f64, f64),
    pub tgt: (f64, f64),
    pub words: usize,
}

pub type RegionPairList = Vec<RegionPair>;

/// Maps every maximal KEEP run of `script` to its time span in `orig` and `tgt`.
pub fn map_unedited_regions(orig: &AlignedUtterance, tgt: &AlignedUtterance, script: &EditScript) -> Result<RegionPairList> {
    map_word_regions((&orig.words, &orig.intervals), (&tgt.words, &tgt.intervals), script)
}

/// [`map_unedited_regions`] on bare word lists with their intervals.
pub fn map_word_regions(
    orig: (&[String], &[(f64, f64)]),
    tgt: (&[String], &[(f64, f64)]),
    script: &EditScript,
) -> Result<RegionPairList> {
    for (w, iv) in [orig, tgt] {
        if w.len() != iv.len() {
            return Err(Error::ShapeMismatch(format!("{} words but {} intervals", w.len(), iv.len())));
        }
    }
    let (orig_words, orig_iv) = orig;
    let (tgt_words, tgt_iv) = tgt;
    script.validate(orig_words.len(), tgt_words.len())?;
    let mut out = Vec::new();
    let mut run: Option<(usize, usize, usize)> = None;
    let mut flush = |run: &mut Option<(usize, usize, usize)>| {
        if let Some((i, j, n)) = run.take() {
            out.push(RegionPair {
                orig: (orig_iv[i].0, orig_iv[i + n - 1].1),
                tgt: (tgt_iv[j].0, tgt_iv[j + n - 1].1),
                words: n,
            });
        }
    };
    for op in &script.ops {
        match op {
            EditOp::Keep { orig: i, tgt: j } => {
                if orig_words[*i] != tgt_words[*j] {
                    return Err(Error::ScriptMismatch(format!(
                        "kept word {:?} at {i} differs from target word {:?} at {j}",
                        orig_words[*i], tgt_words[*j]
                    )));
                }
                run = Some(match run {
                    Some((a, b, n)) => (a, b, n + 1),
                    None => (*i, *j, 1),
                });
            }
            _ => flush(&mut run),
        }
    }
    flush(&mut run);
    Ok(out)
}

/// Result of [`crossfade`]; `hard_cut` is set when the segments were too short
/// for the requested overlap.
#[derive(Debug, Clone, PartialEq)]
pub struct Crossfaded {
    pub samples: Vec<f32>,
    pub hard_cut: bool,
}

/// Joins `a` and `b` overlapping by `fade_len` samples: the last `fade_len`
/// samples of `a` are blended with the first `fade_len` of `b` under a linear
/// ramp `w_n = n/(fade_len − 1)`.
pub fn crossfade(a: &[f32], b: &[f32], fade_len: usize) -> Crossfaded {
    if fade_len == 0 || a.len() < fade_len || b.len() < fade_len {
        let mut samples = a.to_vec();
        samples.extend_from_slice(b);
        return Crossfaded {
            samples,
            hard_cut: fade_len > 0,
        };
    }
    let head = a.len() - fade_len;
    let mut samples = a[..head].to_vec();
    samples.extend(blend(&a[head..], &b[..fade_len]));
    samples.extend_from_slice(&b[fade_len..]);
    Crossfaded {
        samples,
        hard_cut: false,
    }
}

fn ramp(n: usize, len: usize) -> f32 {
    if len <= 1 {
        1.0
    } else {
        n as f32 / (len - 1) as f32
    }
}

fn blend<'a>(a: &'a [f32], b: &'a [f32]) -> impl Iterator<Item = f32> + 'a {
    let len = a.len();
    a.iter().zip(b).enumerate().map(move |(n, (&x, &y))| {
        let w = ramp(n, len);
        x + w * (y - x)
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Replaced {
    pub clip: AudioClip,
    /// Region boundaries that got a hard cut because the region was shorter
    /// than two fades.
    pub hard_cuts: usize,
}

/// Sample ranges of the fade zones that [`replace_unedited`] writes for
/// `regions` on the target timeline.
pub fn fade_zones(regions: &[RegionPair], tgt_len: usize, sample_rate: u32, fade_ms: f64) -> Vec<(usize, usize)> {
    let f = fade_samples(fade_ms, sample_rate);
    let mut out = Vec::new();
    for r in regions {
        let (a, b) = sample_span(r.tgt, sample_rate);
        let b = b.min(tgt_len);
        if b - a < 2 * f {
            continue;
        }
        if a > 0 && f > 0 {
            out.push((a, a + f));
        }
        if b < tgt_len && f > 0 {
            out.push((b - f, b));
        }
    }
    out
}

/// `regions` with the fade zones of [`replace_unedited`] cut away on the
/// target side and the proportional stretch cut from the original side.
/// Regions that vanish are dropped.
pub fn trim_fades(regions: &[RegionPair], fade_ms: f64, tgt_duration: f64) -> RegionPairList {
    let m = fade_ms * 1e-3;
    regions
        .iter()
        .filter_map(|r| {
            let (ta, tb) = r.tgt;
            if tb - ta <= 2.0 * m {
                return None;
            }
            let ratio = (r.orig.1 - r.orig.0) / (tb - ta);
            let cut_a = if ta > 0.0 { m } else { 0.0 };
            let cut_b = if tb < tgt_duration - 1e-9 { m } else { 0.0 };
            Some(RegionPair {
                orig: (r.orig.0 + cut_a * ratio, r.orig.1 - cut_b * ratio),
                tgt: (ta + cut_a, tb - cut_b),
                words: r.words,
            })
        })
        .collect()
}

fn fade_samples(fade_ms: f64, sample_rate: u32) -> usize {
    (fade_ms * 1e-3 * sample_rate as f64).round() as usize
}

fn sample_span(iv: (f64, f64), sample_rate: u32) -> (usize, usize) {
    (
        crate::audio::time_to_sample(iv.0, sample_rate),
        crate::audio::time_to_sample(iv.1, sample_rate),
    )
}

fn check_regions(regions: &[RegionPair], orig: &AudioClip, tgt: &AudioClip) -> Result<()> {
    let mut prev = (0.0f64, 0.0f64);
    for (k, r) in regions.iter().enumerate() {
        let ok_side = |iv: (f64, f64), dur: f64, last: f64| iv.0 >= last && iv.0 < iv.1 && iv.1 <= dur + 1e-9;
        if !ok_side(r.orig, orig.duration_s(), prev.0) || !ok_side(r.tgt, tgt.duration_s(), prev.1) {
            return Err(Error::Precondition(format!(
                "region {k} ({:?} -> {:?}) is out of range or out of order",
                r.orig, r.tgt
            )));
        }
        prev = (r.orig.1, r.tgt.1);
    }
    Ok(())
}

/// Overwrites each target region with the matching original stretch,
/// linearly resampled when the two lengths differ. Inner boundaries ramp
/// from the target into the original and back over `fade_ms`, inside the
/// region; boundaries at the clip edges need no fade.
pub fn replace_unedited(tgt: &AudioClip, orig: &AudioClip, regions: &[RegionPair], fade_ms: f64) -> Result<Replaced> {
    if tgt.sample_rate != orig.sample_rate {
        return Err(Error::Precondition(format!(
            "sample rates differ: {} vs {}",
            tgt.sample_rate, orig.sample_rate
        )));
    }
    if !(fade_ms >= 0.0) {
        return Err(Error::InvalidConfig("fade length must be non-negative".into()));
    }
    check_regions(regions, orig, tgt)?;
    let sr = tgt.sample_rate;
    let f = fade_samples(fade_ms, sr);
    let mut out = tgt.samples.clone();
    let mut hard_cuts = 0;
    for r in regions {
        let (ta, tb) = sample_span(r.tgt, sr);
        let tb = tb.min(out.len());
        let (oa, ob) = sample_span(r.orig, sr);
        let ob = ob.min(orig.len());
        let seg = resample_linear(&orig.samples[oa..ob], tb - ta);
        if tb - ta < 2 * f {
            hard_cuts += usize::from(ta > 0) + usize::from(tb < out.len());
            out[ta..tb].copy_from_slice(&seg);
            continue;
        }
        let n = tb - ta;
        let mut mixed = seg.clone();
        if ta > 0 && f > 0 {
            let head: Vec<f32> = blend(&out[ta..ta + f], &seg[..f]).collect();
            mixed[..f].copy_from_slice(&head);
        }
        if tb < out.len() && f > 0 {
            let tail: Vec<f32> = blend(&seg[n - f..], &out[tb - f..tb]).collect();
            mixed[n - f..].copy_from_slice(&tail);
        }
        out[ta..tb].copy_from_slice(&mixed);
    }
    if let Some(i) = out.iter().position(|s| !s.is_finite() || s.abs() > 1.0) {
        return Err(Error::SignalRange(format!("sample {i} = {} after replacement", out[i])));
    }
    Ok(Replaced {
        clip: AudioClip::new(out, sr)?,
        hard_cuts,
    })
}
