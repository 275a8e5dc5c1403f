use serde::{Deserialize, Serialize};

use crate::features::normalize_text;

/// Substitution, deletion and insertion counts of a minimum word alignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct WordErrors {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub ref_words: usize,
}

impl WordErrors {
    pub fn total(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }

    /// Percent. An empty reference scores `100·|hyp|`.
    pub fn rate(&self) -> f64 {
        100.0 * self.total() as f64 / self.ref_words.max(1) as f64
    }
}

fn words(s: &str) -> Vec<String> {
    normalize_text(s).split_whitespace().map(str::to_string).collect()
}

/// Levenshtein alignment over normalised words. Among equal-cost alignments
/// the one with the most substitutions wins, then the fewest deletions.
pub fn word_errors(reference: &str, hypothesis: &str) -> WordErrors {
    let (r, h) = (words(reference), words(hypothesis));
    let (n, m) = (r.len(), h.len());
    // (cost, subs, dels, ins)
    let mut prev: Vec<(usize, usize, usize, usize)> = (0..=m).map(|j| (j, 0, 0, j)).collect();
    for i in 1..=n {
        let mut cur = vec![(i, 0, i, 0); m + 1];
        for j in 1..=m {
            let d = prev[j - 1];
            let diag = if r[i - 1] == h[j - 1] {
                d
            } else {
                (d.0 + 1, d.1 + 1, d.2, d.3)
            };
            let up = prev[j];
            let del = (up.0 + 1, up.1, up.2 + 1, up.3);
            let left = cur[j - 1];
            let ins = (left.0 + 1, left.1, left.2, left.3 + 1);
            cur[j] = [diag, del, ins]
                .into_iter()
                .min_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)).then(a.2.cmp(&b.2)))
                .expect("three candidates");
        }
        prev = cur;
    }
    let (_, s, d, ins) = prev[m];
    WordErrors {
        substitutions: s,
        deletions: d,
        insertions: ins,
        ref_words: n,
    }
}

/// Word error rate in percent.
pub fn wer(reference: &str, hypothesis: &str) -> f64 {
    word_errors(reference, hypothesis).rate()
}
