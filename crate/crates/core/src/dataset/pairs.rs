//! Edit-pair construction. Each source utterance plays the target role (or
//! both roles, for substitutions); its counterpart is cut out of it along the
//! word alignment.

use std::fmt;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::corpus::splice::complement;
use crate::corpus::{compute_edit_script, extract_and_concat, script_to_spans, AlignedUtterance, EditOp, EditScript};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditTask {
    Insert,
    Delete,
    Substitute,
    Multi,
}

impl EditTask {
    pub const ALL: [EditTask; 4] = [
        EditTask::Insert,
        EditTask::Delete,
        EditTask::Substitute,
        EditTask::Multi,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EditTask::Insert => "insert",
            EditTask::Delete => "delete",
            EditTask::Substitute => "substitute",
            EditTask::Multi => "multi",
        }
    }
}

impl fmt::Display for EditTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An edited region on the target side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpan {
    pub words: Range<usize>,
    pub time: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub src_utt: String,
    pub seed: u64,
}

/// One supervised example. Both sides keep their word alignment, which the
/// splicing knows exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct EditPair {
    pub id: String,
    pub task: EditTask,
    pub original: AlignedUtterance,
    pub target: AlignedUtterance,
    pub target_spans: Vec<TargetSpan>,
    pub provenance: Provenance,
}

impl EditPair {
    pub fn original_speech(&self) -> &AudioClip {
        &self.original.audio
    }

    pub fn target_speech(&self) -> &AudioClip {
        &self.target.audio
    }

    pub fn original_text(&self) -> &[String] {
        &self.original.words
    }

    pub fn target_text(&self) -> &[String] {
        &self.target.words
    }

    pub fn script(&self) -> EditScript {
        compute_edit_script(&self.original.words, &self.target.words)
    }

    /// Non-empty audio on both sides, at least one edit, and a script whose
    /// op types agree with the task label.
    pub fn check_invariants(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Infeasible(format!("pair {}: {m}", self.id)));
        if self.original.audio.is_empty() || self.target.audio.is_empty() {
            return fail("empty audio");
        }
        let script = self.script();
        if script.is_identity() {
            return fail("original and target texts are identical");
        }
        let has = |pred: fn(&EditOp) -> bool| script.ops.iter().any(pred);
        let ok = match self.task {
            EditTask::Insert => !has(|o| matches!(o, EditOp::Delete { .. } | EditOp::Substitute { .. })),
            EditTask::Delete => !has(|o| matches!(o, EditOp::Insert { .. } | EditOp::Substitute { .. })),
            EditTask::Substitute => {
                script.edit_runs() == 1 && has(|o| matches!(o, EditOp::Substitute { .. }))
            }
            EditTask::Multi => script.edit_runs() >= 2,
        };
        if !ok {
            return fail(&format!("script does not fit task {}", self.task));
        }
        if script.replay(&self.original.words)? != self.target.words {
            return fail("script replay mismatch");
        }
        Ok(())
    }

    fn finish(
        id: String,
        task: EditTask,
        original: AlignedUtterance,
        target: AlignedUtterance,
        provenance: Provenance,
    ) -> Result<Self> {
        let script = compute_edit_script(&original.words, &target.words);
        let target_spans = script_to_spans(&script.invert(&original.words), &target)?
            .into_iter()
            .map(|s| TargetSpan {
                words: s.orig_words,
                time: s.orig_time,
            })
            .collect();
        let pair = Self {
            id,
            task,
            original,
            target,
            target_spans,
            provenance,
        };
        pair.check_invariants()?;
        Ok(pair)
    }
}

fn validate_spans(u: &AlignedUtterance, spans: &[Range<usize>], min_len: usize) -> Result<()> {
    if spans.is_empty() {
        return Err(Error::Precondition("at least one span is required".into()));
    }
    for (k, s) in spans.iter().enumerate() {
        if s.len() < min_len || s.end > u.len() {
            return Err(Error::Infeasible(format!(
                "span {k} ({s:?}) invalid for {} words (min length {min_len})",
                u.len()
            )));
        }
        if k > 0 && s.start < spans[k - 1].end {
            return Err(Error::Precondition(format!("span {k} overlaps its predecessor")));
        }
    }
    Ok(())
}

/// `u` with the given (ordered, disjoint, non-empty) word ranges cut out of
/// both transcript and audio. Surviving intervals shift left by the removed
/// sample counts.
pub fn remove_words(u: &AlignedUtterance, remove: &[Range<usize>], id: &str) -> Result<AlignedUtterance> {
    let sr = u.audio.sample_rate;
    let times: Vec<(f64, f64)> = remove
        .iter()
        .map(|r| (u.intervals[r.start].0, u.intervals[r.end - 1].1))
        .collect();
    let audio = extract_and_concat(&u.audio, &complement(&times, u.duration_s()))?;

    let sample = |t: f64| u.audio.time_to_sample(t) as i64;
    let mut words = Vec::new();
    let mut intervals = Vec::new();
    for (k, (w, &(start, end))) in u.words.iter().zip(&u.intervals).enumerate() {
        if remove.iter().any(|r| r.contains(&k)) {
            continue;
        }
        let removed_before: i64 = remove
            .iter()
            .zip(&times)
            .filter(|(r, _)| r.end <= k)
            .map(|(_, &(s, e))| sample(e) - sample(s))
            .sum();
        let at = |t: f64| (sample(t) - removed_before) as f64 / sr as f64;
        words.push(w.clone());
        intervals.push((at(start), at(end)));
    }
    AlignedUtterance::new(id, audio, words, intervals)
}

fn provenance(u: &AlignedUtterance, seed: u64) -> Provenance {
    Provenance {
        src_utt: u.id.clone(),
        seed,
    }
}

/// Target = `u`; original = `u` with `spans` removed.
pub fn build_insertion_pair(u: &AlignedUtterance, spans: &[Range<usize>], seed: u64) -> Result<EditPair> {
    validate_spans(u, spans, 1)?;
    let id = format!("{}_{}", u.id, EditTask::Insert);
    let original = remove_words(u, spans, &format!("{id}_orig"))?;
    let mut target = u.clone();
    target.id = format!("{id}_tgt");
    EditPair::finish(id, EditTask::Insert, original, target, provenance(u, seed))
}

/// The insertion construction with original and target swapped.
pub fn build_deletion_pair(u: &AlignedUtterance, spans: &[Range<usize>], seed: u64) -> Result<EditPair> {
    let ins = build_insertion_pair(u, spans, seed)?;
    let id = format!("{}_{}", u.id, EditTask::Delete);
    let mut original = ins.target;
    let mut target = ins.original;
    original.id = format!("{id}_orig");
    target.id = format!("{id}_tgt");
    EditPair::finish(id, EditTask::Delete, original, target, ins.provenance)
}

/// Splits every span at a uniformly drawn interior word boundary into
/// `(S_a, S_b)`; the target keeps the `S_a` parts, the original the `S_b` parts.
fn split_construction(
    u: &AlignedUtterance,
    spans: &[Range<usize>],
    seed: u64,
    task: EditTask,
) -> Result<EditPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut heads = Vec::with_capacity(spans.len());
    let mut tails = Vec::with_capacity(spans.len());
    for s in spans {
        let split = s.start + rng.random_range(1..s.len());
        heads.push(s.start..split);
        tails.push(split..s.end);
    }
    let id = format!("{}_{}", u.id, task);
    let target = remove_words(u, &tails, &format!("{id}_tgt"))?;
    let original = remove_words(u, &heads, &format!("{id}_orig"))?;
    EditPair::finish(id, task, original, target, provenance(u, seed))
}

pub fn build_substitution_pair(u: &AlignedUtterance, span: Range<usize>, seed: u64) -> Result<EditPair> {
    let spans = [span];
    validate_spans(u, &spans, 2)?;
    split_construction(u, &spans, seed, EditTask::Substitute)
}

pub fn build_multiedit_pair(u: &AlignedUtterance, spans: &[Range<usize>], seed: u64) -> Result<EditPair> {
    if spans.len() < 2 {
        return Err(Error::Precondition(format!(
            "multi-edit needs at least 2 spans, got {}",
            spans.len()
        )));
    }
    validate_spans(u, spans, 2)?;
    split_construction(u, spans, seed, EditTask::Multi)
}

/// The split point chosen for each span, reproduced from the seed.
pub fn split_points(spans: &[Range<usize>], seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    spans
        .iter()
        .map(|s| s.start + rng.random_range(1..s.len()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SyntheticConfig;

    fn cfg(dur: f64) -> SyntheticConfig {
        SyntheticConfig {
            word_dur_s: dur,
            ..Default::default()
        }
    }

    #[test]
    fn insertion_removes_middle_word() {
        let u = cfg(0.5).render("u", &[0, 1, 2]).unwrap();
        let p = build_insertion_pair(&u, &[1..2], 0).unwrap();
        assert_eq!(p.original_speech().duration_s(), 1.0);
        assert_eq!(p.original_text(), ["w0", "w2"]);
        assert_eq!(p.target, AlignedUtterance { id: p.target.id.clone(), ..u.clone() });
        assert_eq!(p.original.intervals, vec![(0.0, 0.5), (0.5, 1.0)]);
        assert_eq!(p.target_spans.len(), 1);
        assert_eq!(p.target_spans[0].words, 1..2);
        assert_eq!(p.target_spans[0].time, (0.5, 1.0));
        assert!(matches!(build_insertion_pair(&u, &[], 0), Err(Error::Precondition(_))));
    }

    #[test]
    fn deletion_is_swapped_insertion() {
        let u = cfg(0.5).render("u", &[0, 1, 2]).unwrap();
        let ins = build_insertion_pair(&u, &[1..2], 3).unwrap();
        let del = build_deletion_pair(&u, &[1..2], 3).unwrap();
        assert_eq!(del.target_speech().duration_s(), 1.0);
        assert_eq!(del.original_speech(), ins.target_speech());
        assert_eq!(del.target_speech(), ins.original_speech());
        assert_eq!(del.original_text(), ins.target_text());
        assert_eq!(del.task, EditTask::Delete);
        assert_eq!(del.script(), ins.script().invert(ins.original_text()));
    }

    #[test]
    fn substitution_example() {
        let u = cfg(0.1).render("u", &[0, 1, 2, 3, 4]).unwrap();
        // span = words 1..3; split lands after word 1 since the span has one interior boundary
        let p = build_substitution_pair(&u, 1..3, 9).unwrap();
        assert_eq!(p.target_text(), ["w0", "w1", "w3", "w4"]);
        assert_eq!(p.original_text(), ["w0", "w2", "w3", "w4"]);
        let kinds: Vec<bool> = p.script().ops.iter().map(EditOp::is_keep).collect();
        assert_eq!(kinds, [true, false, true, true]);
        assert!(matches!(p.script().ops[1], EditOp::Substitute { .. }));
        let ctx = 3 * cfg(0.1).word_samples();
        assert_eq!(p.target_speech().len(), ctx + cfg(0.1).word_samples());
        assert!(matches!(build_substitution_pair(&u, 1..2, 0), Err(Error::Infeasible(_))));
    }

    #[test]
    fn multiedit_two_runs() {
        let u = cfg(0.1).render("u", &[0, 1, 2, 3, 4, 5, 6, 7, 0]).unwrap();
        let spans = [1..3, 5..8];
        let p = build_multiedit_pair(&u, &spans, 4).unwrap();
        assert_eq!(p.script().edit_runs(), 2);
        let splits = split_points(&spans, 4);
        let heads: usize = spans.iter().zip(&splits).map(|(s, &k)| k - s.start).sum();
        let ws = cfg(0.1).word_samples();
        assert_eq!(p.target_speech().len(), (9 - 5) * ws + heads * ws);
        assert!(matches!(build_multiedit_pair(&u, &[1..3], 0), Err(Error::Precondition(_))));
    }

    #[test]
    fn degenerate_substitution_is_infeasible() {
        let u = cfg(0.1).render("u", &[0, 3, 3, 1]).unwrap();
        assert!(matches!(build_substitution_pair(&u, 1..3, 0), Err(Error::Infeasible(_))));
    }

    #[test]
    fn kept_words_are_sample_identical() {
        let c = cfg(0.1);
        let u = c.render("u", &[0, 1, 2, 3, 4, 5, 6]).unwrap();
        let p = build_insertion_pair(&u, &[2..4], 0).unwrap();
        for (k, w) in p.original.words.iter().enumerate() {
            let tk = if k < 2 { k } else { k + 2 };
            assert_eq!(&p.target.words[tk], w);
            let (a, b) = p.original.intervals[k];
            let (c0, d) = p.target.intervals[tk];
            assert_eq!(
                p.original.audio.slice_s(a, b).unwrap(),
                p.target.audio.slice_s(c0, d).unwrap()
            );
        }
    }
}
