use serde::{Deserialize, Serialize};

use super::features::Featurizer;
use crate::audio::AudioClip;
use crate::error::{Error, Result};
use crate::features::{MelSpectrogram, SemanticTokenSeq};
use crate::flow::{build_condition, sample, FlowNet};
use crate::lm::{decode, DecodeStatus, DecodeStrategy, EditorLm};
use crate::seed::derive_seed;
use crate::sequence::{build_inference_prompt, PromptMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferenceConfig {
    pub mode: PromptMode,
    pub strategy: DecodeStrategy,
    /// Token budget for `μ_Y`; `0` means `3·|μ_X| + 16`.
    pub max_new_tokens: usize,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            mode: PromptMode::OneShot,
            strategy: DecodeStrategy::Greedy,
            max_new_tokens: 0,
        }
    }
}

impl InferenceConfig {
    pub fn budget(&self, orig_tokens: usize) -> usize {
        if self.max_new_tokens > 0 {
            self.max_new_tokens
        } else {
            3 * orig_tokens + 16
        }
    }
}

/// The three trained pieces an edit needs.
pub struct EditModels<'a> {
    pub featurizer: &'a Featurizer,
    pub lm: &'a EditorLm,
    pub flow: &'a FlowNet,
}

pub struct EditRequest<'a> {
    pub original: &'a AudioClip,
    pub original_text: Option<&'a str>,
    pub target_text: &'a str,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditOutput {
    /// Target mel, `r·|μ_Y|` frames; empty when no token was decoded.
    pub mel: MelSpectrogram,
    pub tokens: Vec<u32>,
    pub orig_tokens: Vec<u32>,
    pub status: DecodeStatus,
}

/// Featurize, prompt, decode `μ_Y`, then sample its mel guided by the
/// original. No alignment of the original is needed.
pub fn run_edit(models: &EditModels<'_>, req: &EditRequest<'_>, config: &InferenceConfig, seed: u64) -> Result<EditOutput> {
    if config.mode == PromptMode::OneShot && req.original_text.is_none() {
        return Err(Error::Precondition("one-shot editing requires the original text".into()));
    }
    let fz = models.featurizer;
    let orig = fz.clip(req.original)?;
    let layout = models.lm.config.layout;
    let prompt = build_inference_prompt(
        req.original_text,
        req.target_text,
        &orig.tokens,
        &orig.speaker,
        config.mode,
        &layout,
    )?;
    let out = decode(
        &prompt,
        models.lm,
        config.strategy,
        config.budget(orig.tokens.len()),
        derive_seed(seed, 0),
    )?;
    let mel = if out.tokens.is_empty() {
        orig.mel.slice(0, 0)
    } else {
        let fc = &models.flow.config;
        let tgt = SemanticTokenSeq::new(out.tokens.clone(), orig.tokens.token_rate_hz);
        let cond = build_condition(&orig.speaker, &orig.tokens, &tgt, &orig.mel, fz.downsample(), fc.fill_value)?;
        sample(models.flow, &cond, fc.ode_steps, derive_seed(seed, 1))?
    };
    Ok(EditOutput {
        mel,
        tokens: out.tokens,
        orig_tokens: orig.tokens.ids,
        status: out.status,
    })
}
