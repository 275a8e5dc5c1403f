use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::AlignedUtterance;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpanSamplerConfig {
    /// Inclusive range of spans per utterance.
    pub spans_per_utt: (usize, usize),
    /// Inclusive range of span lengths in words.
    pub span_len_words: (usize, usize),
    /// Words preserved at each utterance edge.
    pub min_margin_words: usize,
    /// Words preserved between neighbouring spans.
    pub min_gap_words: usize,
}

impl Default for SpanSamplerConfig {
    fn default() -> Self {
        Self {
            spans_per_utt: (1, 3),
            span_len_words: (1, 5),
            min_margin_words: 1,
            min_gap_words: 1,
        }
    }
}

impl SpanSamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let ok_range = |(lo, hi): (usize, usize)| lo >= 1 && lo <= hi;
        if !ok_range(self.spans_per_utt) || !ok_range(self.span_len_words) {
            return Err(Error::InvalidConfig(format!(
                "span sampler ranges must be non-empty and positive: {self:?}"
            )));
        }
        if self.min_gap_words == 0 {
            return Err(Error::InvalidConfig("min_gap_words must be positive".into()));
        }
        Ok(())
    }

    /// Same config with span lengths clamped to at least `min_len` words.
    pub(crate) fn with_min_len(&self, min_len: usize) -> Self {
        let lo = self.span_len_words.0.max(min_len);
        Self {
            span_len_words: (lo, self.span_len_words.1.max(lo)),
            ..self.clone()
        }
    }

    pub fn min_words_for(&self, k: usize) -> usize {
        2 * self.min_margin_words + k * self.span_len_words.0 + k.saturating_sub(1) * self.min_gap_words
    }
}

/// Samples `k` disjoint word ranges obeying the length, gap and margin limits.
///
/// Lengths are drawn uniformly and redrawn while they overflow the budget;
/// leftover words are spread over the k+1 slack slots uniformly.
pub fn sample_spans(
    u: &AlignedUtterance,
    k: usize,
    config: &SpanSamplerConfig,
    seed: u64,
) -> Result<Vec<Range<usize>>> {
    config.validate()?;
    if k == 0 {
        return Err(Error::Precondition("at least one span is required".into()));
    }
    let n = u.len();
    if config.min_words_for(k) > n {
        return Err(Error::Infeasible(format!(
            "{} words cannot host {k} spans (need {})",
            n,
            config.min_words_for(k)
        )));
    }
    let budget = n - 2 * config.min_margin_words - (k - 1) * config.min_gap_words;
    let (lo, hi) = config.span_len_words;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut lengths = vec![lo; k];
    for _ in 0..32 {
        let draw: Vec<usize> = (0..k).map(|_| rng.random_range(lo..=hi)).collect();
        if draw.iter().sum::<usize>() <= budget {
            lengths = draw;
            break;
        }
    }
    let free = budget - lengths.iter().sum::<usize>();
    let mut cuts: Vec<usize> = (0..k).map(|_| rng.random_range(0..=free)).collect();
    cuts.sort_unstable();

    let mut spans = Vec::with_capacity(k);
    let mut cursor = config.min_margin_words;
    let mut used = 0;
    for (len, cut) in lengths.into_iter().zip(cuts) {
        cursor += cut - used;
        used = cut;
        spans.push(cursor..cursor + len);
        cursor += len + config.min_gap_words;
    }
    Ok(spans)
}
