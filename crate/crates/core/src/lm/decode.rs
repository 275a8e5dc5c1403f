use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{rows, EditorLm, LmInput};
use crate::error::{Error, Result};
use crate::sequence::{InferencePrompt, END_ID};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecodeStrategy {
    Greedy,
    TopK { k: usize, temperature: f64 },
}

impl Default for DecodeStrategy {
    fn default() -> Self {
        DecodeStrategy::TopK {
            k: 10,
            temperature: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeStatus {
    /// `Ⓔ` was produced.
    Ended,
    /// The budget ran out before `Ⓔ`.
    MaxNew,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeOutput {
    /// Codebook indices, without the end marker.
    pub tokens: Vec<u32>,
    pub status: DecodeStatus,
}

/// Autoregressive continuation of `prompt` restricted to semantic ids and `Ⓔ`.
pub fn decode(
    prompt: &InferencePrompt,
    model: &EditorLm,
    strategy: DecodeStrategy,
    max_new: usize,
    seed: u64,
) -> Result<DecodeOutput> {
    let c = &model.config;
    if prompt.layout != c.layout {
        return Err(Error::InvalidConfig("prompt vocabulary layout differs from the model".into()));
    }
    let turn = prompt.turn_index();
    c.position_ids(prompt.len() + max_new, turn)?;
    if let DecodeStrategy::TopK { k, temperature } = strategy {
        if k == 0 || !(temperature > 0.0) {
            return Err(Error::InvalidConfig("top-k needs k > 0 and a positive temperature".into()));
        }
    }
    let layout = c.layout;
    let allowed: Vec<u32> = std::iter::once(END_ID)
        .chain((0..layout.semantic_size).map(|s| layout.semantic_offset + s))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids = prompt.ids.clone();
    let mut tokens = Vec::new();
    for _ in 0..max_new {
        let lp = model.forward(&[LmInput {
            ids: &ids,
            turn,
            speaker: &prompt.speaker,
        }])?;
        let last = rows(&lp, 0)?.pop().expect("non-empty");
        let next = pick(&last, &allowed, strategy, &mut rng);
        if next == END_ID {
            return Ok(DecodeOutput {
                tokens,
                status: DecodeStatus::Ended,
            });
        }
        tokens.push(next - layout.semantic_offset);
        ids.push(next);
    }
    Ok(DecodeOutput {
        tokens,
        status: DecodeStatus::MaxNew,
    })
}

fn pick(logp: &[f64], allowed: &[u32], strategy: DecodeStrategy, rng: &mut ChaCha8Rng) -> u32 {
    let mut cand: Vec<(u32, f64)> = allowed.iter().map(|&i| (i, logp[i as usize])).collect();
    cand.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    match strategy {
        DecodeStrategy::Greedy => cand[0].0,
        DecodeStrategy::TopK { k, temperature } => {
            cand.truncate(k.min(cand.len()));
            let top = cand[0].1 / temperature;
            let w: Vec<f64> = cand.iter().map(|&(_, l)| (l / temperature - top).exp()).collect();
            let mut x = rng.random::<f64>() * w.iter().sum::<f64>();
            for (&(id, _), wi) in cand.iter().zip(&w) {
                if x < *wi {
                    return id;
                }
                x -= wi;
            }
            cand[cand.len() - 1].0
        }
    }
}
