use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::alignment::AlignedUtterance;
use super::diff::{EditOp, EditScript};
use crate::error::{Error, Result};

/// A maximal run of non-KEEP ops with the original-side time it covers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditSpan {
    pub orig_words: Range<usize>,
    pub tgt_words: Range<usize>,
    /// Zero-length at the insertion point when `orig_words` is empty.
    pub orig_time: (f64, f64),
}

pub type EditSpanList = Vec<EditSpan>;

/// Merges runs of edits in `script` and maps them onto `u`'s time axis.
///
/// A pure insertion sits at the midpoint of the gap between its neighbouring
/// original words (utterance start/end standing in for missing neighbours).
pub fn script_to_spans(script: &EditScript, u: &AlignedUtterance) -> Result<EditSpanList> {
    let n_tgt = script
        .ops
        .iter()
        .filter(|o| !matches!(o, EditOp::Delete { .. }))
        .count();
    script
        .validate(u.len(), n_tgt)
        .map_err(|e| Error::ScriptMismatch(format!("script vs utterance {}: {e}", u.id)))?;

    let mut spans = Vec::new();
    let (mut i, mut j) = (0usize, 0usize);
    let mut open: Option<(usize, usize)> = None;
    let close = |start: (usize, usize), i: usize, j: usize| EditSpan {
        orig_words: start.0..i,
        tgt_words: start.1..j,
        orig_time: span_time(u, start.0..i),
    };
    for op in &script.ops {
        if op.is_keep() {
            if let Some(start) = open.take() {
                spans.push(close(start, i, j));
            }
        } else if open.is_none() {
            open = Some((i, j));
        }
        match op {
            EditOp::Keep { .. } | EditOp::Substitute { .. } => {
                i += 1;
                j += 1;
            }
            EditOp::Delete { .. } => i += 1,
            EditOp::Insert { .. } => j += 1,
        }
    }
    if let Some(start) = open {
        spans.push(close(start, i, j));
    }
    Ok(spans)
}

fn span_time(u: &AlignedUtterance, words: Range<usize>) -> (f64, f64) {
    if words.is_empty() {
        let at = words.start;
        let prev_end = if at > 0 { u.intervals[at - 1].1 } else { 0.0 };
        let next_start = if at < u.len() {
            u.intervals[at].0
        } else {
            u.duration_s().max(prev_end)
        };
        let p = 0.5 * (prev_end + next_start);
        (p, p)
    } else {
        (u.intervals[words.start].0, u.intervals[words.end - 1].1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::AudioClip;
    use crate::corpus::diff::compute_edit_script;
    use proptest::prelude::*;

    fn utt(words: &[&str]) -> AlignedUtterance {
        let n = words.len();
        AlignedUtterance::new(
            "u",
            AudioClip::new(vec![0.0; 8_000 * n], 16_000).unwrap(),
            words.iter().map(|w| w.to_string()).collect(),
            (0..n).map(|k| (k as f64 * 0.5, (k + 1) as f64 * 0.5)).collect(),
        )
        .unwrap()
    }

    fn w(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn all_keep_has_no_spans() {
        let u = utt(&["a", "b", "c"]);
        let s = compute_edit_script(&u.words, &u.words);
        assert!(script_to_spans(&s, &u).unwrap().is_empty());
    }

    #[test]
    fn substitution_maps_to_word_interval() {
        let u = utt(&["a", "b", "c"]);
        let s = compute_edit_script(&u.words, &w("a x c"));
        let spans = script_to_spans(&s, &u).unwrap();
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].orig_time, (0.5, 1.0));
        assert_eq!(spans[0].orig_words, 1..2);
    }

    #[test]
    fn adjacent_delete_and_substitute_merge() {
        let u = utt(&["a", "b", "c"]);
        let script = EditScript {
            ops: vec![
                EditOp::Keep { orig: 0, tgt: 0 },
                EditOp::Delete { orig: 1 },
                EditOp::Substitute {
                    orig: 2,
                    tgt: 1,
                    word: "z".into(),
                },
            ],
        };
        let spans = script_to_spans(&script, &u).unwrap();
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].orig_time, (0.5, 1.5));
        assert_eq!(spans[0].orig_words, 1..3);
        assert_eq!(spans[0].tgt_words, 1..2);
    }

    #[test]
    fn insertion_sits_at_gap_midpoint() {
        let mut u = utt(&["a", "c"]);
        u.intervals = vec![(0.0, 0.4), (0.6, 1.0)];
        let s = compute_edit_script(&u.words, &w("a b c"));
        let spans = script_to_spans(&s, &u).unwrap();
        assert_eq!(spans[0].orig_time, (0.5, 0.5));
        assert!(spans[0].orig_words.is_empty());
    }

    #[test]
    fn mismatched_script_is_rejected() {
        let u = utt(&["a", "b"]);
        let s = compute_edit_script(&w("a b c"), &w("a b"));
        assert!(matches!(script_to_spans(&s, &u), Err(Error::ScriptMismatch(_))));
    }

    proptest! {
        #[test]
        fn spans_are_disjoint_and_ordered(
            a in prop::collection::vec(0u8..4, 1..10),
            b in prop::collection::vec(0u8..4, 0..10),
        ) {
            let names: Vec<String> = a.iter().map(|x| format!("w{x}")).collect();
            let refs: Vec<&str> = names.iter().map(String::as_str).collect();
            let u = utt(&refs);
            let tgt: Vec<String> = b.iter().map(|x| format!("w{x}")).collect();
            let s = compute_edit_script(&u.words, &tgt);
            let spans = script_to_spans(&s, &u).unwrap();
            for pair in spans.windows(2) {
                prop_assert!(pair[0].orig_words.end <= pair[1].orig_words.start);
                prop_assert!(pair[0].tgt_words.end <= pair[1].tgt_words.start);
                prop_assert!(pair[0].orig_time.1 <= pair[1].orig_time.0);
            }
            for sp in &spans {
                prop_assert!(sp.orig_time.0 <= sp.orig_time.1);
            }
        }
    }
}
