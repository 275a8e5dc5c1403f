//! Word-level transcript diffing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One step of an edit script. `orig` indexes original words, `tgt` target words.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum EditOp {
    Keep { orig: usize, tgt: usize },
    Delete { orig: usize },
    Insert { tgt: usize, word: String },
    Substitute { orig: usize, tgt: usize, word: String },
}

impl EditOp {
    pub fn is_keep(&self) -> bool {
        matches!(self, EditOp::Keep { .. })
    }

    pub fn cost(&self) -> usize {
        usize::from(!self.is_keep())
    }

    fn is_indel(&self) -> bool {
        matches!(self, EditOp::Delete { .. } | EditOp::Insert { .. })
    }

    /// Tie-break rank: edits sort before keeps, substitutions first.
    fn rank(&self) -> u8 {
        match self {
            EditOp::Substitute { .. } => 0,
            EditOp::Delete { .. } => 1,
            EditOp::Insert { .. } => 2,
            EditOp::Keep { .. } => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EditScript {
    pub ops: Vec<EditOp>,
}

impl EditScript {
    pub fn cost(&self) -> usize {
        self.ops.iter().map(EditOp::cost).sum()
    }

    pub fn indels(&self) -> usize {
        self.ops.iter().filter(|o| o.is_indel()).count()
    }

    pub fn is_identity(&self) -> bool {
        self.ops.iter().all(EditOp::is_keep)
    }

    /// Ordering key used to pick among equal-cost scripts.
    pub fn preference_key(&self) -> (usize, usize, Vec<u8>) {
        (
            self.cost(),
            self.indels(),
            self.ops.iter().map(EditOp::rank).collect(),
        )
    }

    /// Number of maximal runs of non-KEEP ops.
    pub fn edit_runs(&self) -> usize {
        let mut runs = 0;
        let mut in_run = false;
        for op in &self.ops {
            if !op.is_keep() && !in_run {
                runs += 1;
            }
            in_run = !op.is_keep();
        }
        runs
    }

    /// Checks that the ops walk `0..n_orig` and `0..n_tgt` exactly once, in order.
    pub fn validate(&self, n_orig: usize, n_tgt: usize) -> Result<()> {
        let (mut i, mut j) = (0usize, 0usize);
        for (k, op) in self.ops.iter().enumerate() {
            let (di, dj) = match *op {
                EditOp::Keep { orig, tgt } | EditOp::Substitute { orig, tgt, .. } => {
                    if orig != i || tgt != j {
                        return Err(Error::ScriptMismatch(format!("op {k} out of order")));
                    }
                    (1, 1)
                }
                EditOp::Delete { orig } => {
                    if orig != i {
                        return Err(Error::ScriptMismatch(format!("op {k} out of order")));
                    }
                    (1, 0)
                }
                EditOp::Insert { tgt, .. } => {
                    if tgt != j {
                        return Err(Error::ScriptMismatch(format!("op {k} out of order")));
                    }
                    (0, 1)
                }
            };
            i += di;
            j += dj;
        }
        if i != n_orig || j != n_tgt {
            return Err(Error::ScriptMismatch(format!(
                "script covers {i}/{n_orig} original and {j}/{n_tgt} target words"
            )));
        }
        Ok(())
    }

    /// Applies the script to `original`, producing the target word sequence.
    pub fn replay(&self, original: &[String]) -> Result<Vec<String>> {
        let n_tgt = self
            .ops
            .iter()
            .filter(|o| !matches!(o, EditOp::Delete { .. }))
            .count();
        self.validate(original.len(), n_tgt)?;
        let mut out = Vec::with_capacity(n_tgt);
        for op in &self.ops {
            match op {
                EditOp::Keep { orig, .. } => out.push(original[*orig].clone()),
                EditOp::Delete { .. } => {}
                EditOp::Insert { word, .. } | EditOp::Substitute { word, .. } => {
                    out.push(word.clone())
                }
            }
        }
        Ok(out)
    }

    /// The script mapping target back to original.
    pub fn invert(&self, original: &[String]) -> EditScript {
        let ops = self
            .ops
            .iter()
            .map(|op| match *op {
                EditOp::Keep { orig, tgt } => EditOp::Keep {
                    orig: tgt,
                    tgt: orig,
                },
                EditOp::Delete { orig } => EditOp::Insert {
                    tgt: orig,
                    word: original[orig].clone(),
                },
                EditOp::Insert { tgt, .. } => EditOp::Delete { orig: tgt },
                EditOp::Substitute { orig, tgt, .. } => EditOp::Substitute {
                    orig: tgt,
                    tgt: orig,
                    word: original[orig].clone(),
                },
            })
            .collect();
        EditScript { ops }
    }
}

/// Minimum unit-cost word edit script.
///
/// Among minimum-cost scripts, fewer insertions/deletions win (so a
/// substitution beats a delete+insert pair), then the op sequence that is
/// lexicographically smallest under SUBSTITUTE < DELETE < INSERT < KEEP, which
/// places edits at the earliest possible positions.
pub fn compute_edit_script<S: AsRef<str>>(original: &[S], target: &[S]) -> EditScript {
    let n = original.len();
    let m = target.len();
    let w = m + 1;
    // best[i][j]: (cost, indels) to turn original[i..] into target[j..]
    let mut best = vec![(0usize, 0usize); (n + 1) * w];
    for i in (0..=n).rev() {
        for j in (0..=m).rev() {
            best[i * w + j] = if i == n {
                (m - j, m - j)
            } else if j == m {
                (n - i, n - i)
            } else {
                let sub = usize::from(original[i].as_ref() != target[j].as_ref());
                let d = best[(i + 1) * w + j + 1];
                let diag = (d.0 + sub, d.1);
                let del = best[(i + 1) * w + j];
                let ins = best[i * w + j + 1];
                diag.min((del.0 + 1, del.1 + 1)).min((ins.0 + 1, ins.1 + 1))
            };
        }
    }

    let mut ops = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (0usize, 0usize);
    while i < n || j < m {
        let here = best[i * w + j];
        let matches = i < n && j < m && original[i].as_ref() == target[j].as_ref();
        if i < n && j < m && !matches {
            let d = best[(i + 1) * w + j + 1];
            if (d.0 + 1, d.1) == here {
                ops.push(EditOp::Substitute {
                    orig: i,
                    tgt: j,
                    word: target[j].as_ref().to_string(),
                });
                i += 1;
                j += 1;
                continue;
            }
        }
        if i < n {
            let d = best[(i + 1) * w + j];
            if (d.0 + 1, d.1 + 1) == here {
                ops.push(EditOp::Delete { orig: i });
                i += 1;
                continue;
            }
        }
        if j < m {
            let d = best[i * w + j + 1];
            if (d.0 + 1, d.1 + 1) == here {
                ops.push(EditOp::Insert {
                    tgt: j,
                    word: target[j].as_ref().to_string(),
                });
                j += 1;
                continue;
            }
        }
        debug_assert!(matches);
        ops.push(EditOp::Keep { orig: i, tgt: j });
        i += 1;
        j += 1;
    }
    EditScript { ops }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn words(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    /// Enumerates every alignment path and returns the preferred one.
    fn brute_force(a: &[String], b: &[String]) -> EditScript {
        fn rec(
            a: &[String],
            b: &[String],
            i: usize,
            j: usize,
            ops: &mut Vec<EditOp>,
            best: &mut Option<EditScript>,
        ) {
            if i == a.len() && j == b.len() {
                let s = EditScript { ops: ops.clone() };
                if best
                    .as_ref()
                    .is_none_or(|cur| s.preference_key() < cur.preference_key())
                {
                    *best = Some(s);
                }
                return;
            }
            if i < a.len() && j < b.len() {
                ops.push(if a[i] == b[j] {
                    EditOp::Keep { orig: i, tgt: j }
                } else {
                    EditOp::Substitute {
                        orig: i,
                        tgt: j,
                        word: b[j].clone(),
                    }
                });
                rec(a, b, i + 1, j + 1, ops, best);
                ops.pop();
            }
            if i < a.len() {
                ops.push(EditOp::Delete { orig: i });
                rec(a, b, i + 1, j, ops, best);
                ops.pop();
            }
            if j < b.len() {
                ops.push(EditOp::Insert {
                    tgt: j,
                    word: b[j].clone(),
                });
                rec(a, b, i, j + 1, ops, best);
                ops.pop();
            }
        }
        let mut best = None;
        rec(a, b, 0, 0, &mut Vec::new(), &mut best);
        best.unwrap()
    }

    fn kinds(s: &EditScript) -> Vec<&'static str> {
        s.ops
            .iter()
            .map(|o| match o {
                EditOp::Keep { .. } => "K",
                EditOp::Delete { .. } => "D",
                EditOp::Insert { .. } => "I",
                EditOp::Substitute { .. } => "S",
            })
            .collect()
    }

    #[test]
    fn identity_is_all_keep() {
        let s = compute_edit_script(&words("a b c"), &words("a b c"));
        assert_eq!(kinds(&s), ["K", "K", "K"]);
        assert!(s.is_identity());
    }

    #[test]
    fn substitution_and_insertion_examples() {
        let sub = compute_edit_script(&words("a b c"), &words("a x c"));
        assert_eq!(kinds(&sub), ["K", "S", "K"]);
        assert_eq!(sub, brute_force(&words("a b c"), &words("a x c")));
        let ins = compute_edit_script(&words("a c"), &words("a b c"));
        assert_eq!(kinds(&ins), ["K", "I", "K"]);
        assert_eq!(ins, brute_force(&words("a c"), &words("a b c")));
    }

    #[test]
    fn substitution_preferred_over_delete_insert() {
        let s = compute_edit_script(&words("a b"), &words("b c"));
        assert_eq!(kinds(&s), ["S", "S"]);
    }

    #[test]
    fn earliest_position_among_equal_words() {
        let s = compute_edit_script(&words("a a b"), &words("a b"));
        assert_eq!(kinds(&s), ["D", "K", "K"]);
    }

    #[test]
    fn empty_sides() {
        assert!(compute_edit_script::<String>(&[], &[]).ops.is_empty());
        assert_eq!(kinds(&compute_edit_script(&words("a b"), &[])), ["D", "D"]);
        assert_eq!(kinds(&compute_edit_script(&[], &words("a"))), ["I"]);
    }

    #[test]
    fn invert_round_trips() {
        let a = words("a b c d");
        let b = words("a x d e");
        let s = compute_edit_script(&a, &b);
        let inv = s.invert(&a);
        assert_eq!(inv.replay(&b).unwrap(), a);
    }

    fn word_list(max: usize) -> impl Strategy<Value = Vec<String>> {
        prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d"]), 0..=max)
            .prop_map(|v| v.into_iter().map(str::to_string).collect())
    }

    proptest! {
        #[test]
        fn replay_reproduces_target(a in word_list(12), b in word_list(12)) {
            let s = compute_edit_script(&a, &b);
            prop_assert_eq!(s.replay(&a).unwrap(), b);
        }

        #[test]
        fn matches_exhaustive_search(a in word_list(5), b in word_list(5)) {
            let s = compute_edit_script(&a, &b);
            prop_assert_eq!(s, brute_force(&a, &b));
        }
    }
}
