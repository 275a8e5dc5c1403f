use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::dataset::{EditPair, EditTask};
use crate::error::{Error, Result};
use crate::features::{
    fit_codebook, speaker_embed, tokenize_speech, Codebook, CodebookConfig, MelConfig, MelExtractor,
    MelSpectrogram, SemanticTokenSeq, SpeakerEmbedding,
};
use crate::features::encode_text;
use crate::flow::{build_condition, FlowCondition, FlowExample};
use crate::sequence::{
    build_inference_prompt, build_training_sequence, InferencePrompt, LMTrainExample, PairFeatures, PromptMode,
    VocabLayout,
};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub mel: MelConfig,
    pub codebook: CodebookConfig,
}

/// Mel padded to a whole number of tokens, its tokens and speaker vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipFeatures {
    pub mel: MelSpectrogram,
    pub tokens: SemanticTokenSeq,
    pub speaker: SpeakerEmbedding,
}

pub struct Featurizer {
    pub extractor: MelExtractor,
    pub codebook: Codebook,
}

impl Featurizer {
    pub fn new(mel: MelConfig, codebook: Codebook) -> Result<Self> {
        let extractor = MelExtractor::new(mel)?;
        if codebook.mel_config_id != extractor.config().id() {
            return Err(Error::InvalidConfig(format!(
                "codebook was fitted on mel config {}, extractor uses {}",
                codebook.mel_config_id,
                extractor.config().id()
            )));
        }
        Ok(Self { extractor, codebook })
    }

    /// Fits a codebook on the target side of `pairs`.
    pub fn fit(config: &FeatureConfig, pairs: &[EditPair], seed: u64) -> Result<Self> {
        let extractor = MelExtractor::new(config.mel.clone())?;
        let mels = pairs
            .par_iter()
            .map(|p| extractor.compute(p.target_speech()))
            .collect::<Result<Vec<_>>>()?;
        let codebook = fit_codebook(&mels, &config.codebook, seed)?;
        Ok(Self { extractor, codebook })
    }

    pub fn downsample(&self) -> usize {
        self.codebook.downsample
    }

    pub fn mel(&self, clip: &AudioClip) -> Result<MelSpectrogram> {
        Ok(self.extractor.compute(clip)?.pad_to_multiple(self.downsample()))
    }

    pub fn clip(&self, clip: &AudioClip) -> Result<ClipFeatures> {
        let mel = self.mel(clip)?;
        let tokens = tokenize_speech(&mel, &self.codebook, self.downsample())?;
        let speaker = speaker_embed(&mel)?;
        Ok(ClipFeatures { mel, tokens, speaker })
    }

    pub fn pair(&self, pair: &EditPair) -> Result<PairData> {
        Ok(PairData {
            id: pair.id.clone(),
            task: Some(pair.task),
            original_text: pair.original.text(),
            target_text: pair.target.text(),
            orig: self.clip(pair.original_speech())?,
            tgt: self.clip(pair.target_speech())?,
        })
    }

    pub fn pairs(&self, pairs: &[EditPair]) -> Result<Vec<PairData>> {
        pairs.par_iter().map(|p| self.pair(p)).collect()
    }
}

/// Everything the models need from one edit pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairData {
    pub id: String,
    /// `None` for plain synthesis pairs whose two sides are unrelated.
    pub task: Option<EditTask>,
    pub original_text: String,
    pub target_text: String,
    pub orig: ClipFeatures,
    pub tgt: ClipFeatures,
}

impl PairData {
    /// Synthesis pair: `target` read in the voice of an unrelated `prompt`
    /// utterance, both given as text plus features.
    pub fn tts(id: impl Into<String>, prompt: (&str, &ClipFeatures), target: (&str, &ClipFeatures)) -> Self {
        Self {
            id: id.into(),
            task: None,
            original_text: prompt.0.to_string(),
            target_text: target.0.to_string(),
            orig: prompt.1.clone(),
            tgt: target.1.clone(),
        }
    }

    /// Training sequence; the speaker slot comes from the target.
    pub fn lm_example(&self, layout: &VocabLayout) -> Result<LMTrainExample> {
        build_training_sequence(
            &PairFeatures {
                speaker: self.tgt.speaker.clone(),
                target_text: encode_text(&self.target_text),
                orig_tokens: self.orig.tokens.clone(),
                tgt_tokens: self.tgt.tokens.clone(),
            },
            layout,
        )
    }

    /// Training sequence laid out like a `mode` prompt followed by the target
    /// tokens. Zero-shot is identical to [`PairData::lm_example`].
    pub fn lm_example_as(&self, mode: PromptMode, layout: &VocabLayout) -> Result<LMTrainExample> {
        match mode {
            PromptMode::ZeroShot => self.lm_example(layout),
            PromptMode::OneShot => {
                let mut p = self.prompt(mode, layout)?;
                p.speaker = self.tgt.speaker.vector.clone();
                p.into_training(&self.tgt.tokens)
            }
        }
    }

    /// Flow training example; the speaker comes from the target.
    pub fn flow_example(&self, downsample: usize, fill_value: f64) -> Result<FlowExample> {
        let cond = build_condition(
            &self.tgt.speaker,
            &self.orig.tokens,
            &self.tgt.tokens,
            &self.orig.mel,
            downsample,
            fill_value,
        )?;
        FlowExample::new(cond, &self.tgt.mel)
    }

    /// Flow condition for generating `tgt_tokens`; the speaker comes from the
    /// original.
    pub fn flow_condition(
        &self,
        tgt_tokens: &SemanticTokenSeq,
        downsample: usize,
        fill_value: f64,
    ) -> Result<FlowCondition> {
        build_condition(
            &self.orig.speaker,
            &self.orig.tokens,
            tgt_tokens,
            &self.orig.mel,
            downsample,
            fill_value,
        )
    }

    /// Inference prompt; the speaker slot comes from the original.
    pub fn prompt(&self, mode: PromptMode, layout: &VocabLayout) -> Result<InferencePrompt> {
        build_inference_prompt(
            Some(&self.original_text),
            &self.target_text,
            &self.orig.tokens,
            &self.orig.speaker,
            mode,
            layout,
        )
    }
}
