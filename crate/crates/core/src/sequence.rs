//! LM sequences: `Ⓢ v text μ_X Ⓣ μ_Y Ⓔ` for training and the matching
//! prefixes for inference, over a single vocabulary with disjoint id ranges.
//!
//! | ids                                   | meaning          |
//! |---------------------------------------|------------------|
//! | 0, 1, 2                               | Ⓢ, Ⓣ, Ⓔ          |
//! | 3                                     | speaker slot     |
//! | 4 .. 4 + 39                           | text characters  |
//! | 43 .. 43 + semantic_size              | semantic tokens  |

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{encode_text, SemanticTokenSeq, SpeakerEmbedding, TextTokenSeq, TEXT_VOCAB_SIZE};

pub const SEQUENCE_FORMAT_VERSION: u32 = 1;

pub const START_ID: u32 = 0;
pub const TURN_ID: u32 = 1;
pub const END_ID: u32 = 2;
pub const SPEAKER_ID: u32 = 3;
pub const N_SPECIAL: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabLayout {
    pub text_offset: u32,
    pub text_size: u32,
    pub semantic_offset: u32,
    pub semantic_size: u32,
}

impl VocabLayout {
    pub fn new(semantic_size: usize) -> Self {
        let text_size = TEXT_VOCAB_SIZE as u32;
        Self {
            text_offset: N_SPECIAL,
            text_size,
            semantic_offset: N_SPECIAL + text_size,
            semantic_size: semantic_size as u32,
        }
    }

    pub fn size(&self) -> usize {
        (self.semantic_offset + self.semantic_size) as usize
    }

    pub fn text_id(&self, t: u32) -> Result<u32> {
        if t >= self.text_size {
            return Err(Error::VocabOutOfRange {
                id: t,
                vocab: self.text_size as usize,
            });
        }
        Ok(self.text_offset + t)
    }

    pub fn semantic_id(&self, s: u32) -> Result<u32> {
        if s >= self.semantic_size {
            return Err(Error::VocabOutOfRange {
                id: s,
                vocab: self.semantic_size as usize,
            });
        }
        Ok(self.semantic_offset + s)
    }

    /// Codebook index for a unified id in the semantic range.
    pub fn semantic_of(&self, id: u32) -> Option<u32> {
        (id >= self.semantic_offset && id < self.semantic_offset + self.semantic_size)
            .then(|| id - self.semantic_offset)
    }

    pub fn is_semantic(&self, id: u32) -> bool {
        self.semantic_of(id).is_some()
    }

    fn text_ids(&self, t: &TextTokenSeq) -> Result<Vec<u32>> {
        t.ids.iter().map(|&i| self.text_id(i)).collect()
    }

    fn semantic_ids(&self, s: &SemanticTokenSeq) -> Result<Vec<u32>> {
        s.ids.iter().map(|&i| self.semantic_id(i)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    Start,
    Speaker,
    Text,
    OrigSpeech,
    Turn,
    TargetSpeech,
    End,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    ZeroShot,
    OneShot,
}

/// Inputs for one training sequence. There is deliberately no slot for the
/// original transcript.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairFeatures {
    pub speaker: SpeakerEmbedding,
    pub target_text: TextTokenSeq,
    pub orig_tokens: SemanticTokenSeq,
    pub tgt_tokens: SemanticTokenSeq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LMTrainExample {
    pub version: u32,
    pub layout: VocabLayout,
    pub ids: Vec<u32>,
    pub segments: Vec<Segment>,
    /// True at the positions of `μ_Y` and `Ⓔ`, whose ids are the supervised labels.
    pub loss_mask: Vec<bool>,
    pub speaker: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferencePrompt {
    pub version: u32,
    pub layout: VocabLayout,
    pub mode: PromptMode,
    pub ids: Vec<u32>,
    pub segments: Vec<Segment>,
    pub speaker: Vec<f64>,
}

fn push(ids: &mut Vec<u32>, segs: &mut Vec<Segment>, new: impl IntoIterator<Item = u32>, seg: Segment) {
    for id in new {
        ids.push(id);
        segs.push(seg);
    }
}

fn prefix(layout: &VocabLayout, text: &[u32], orig: &SemanticTokenSeq) -> Result<(Vec<u32>, Vec<Segment>)> {
    let mut ids = Vec::new();
    let mut segs = Vec::new();
    push(&mut ids, &mut segs, [START_ID], Segment::Start);
    push(&mut ids, &mut segs, [SPEAKER_ID], Segment::Speaker);
    push(&mut ids, &mut segs, text.iter().copied(), Segment::Text);
    push(&mut ids, &mut segs, layout.semantic_ids(orig)?, Segment::OrigSpeech);
    push(&mut ids, &mut segs, [TURN_ID], Segment::Turn);
    Ok((ids, segs))
}

pub fn build_training_sequence(features: &PairFeatures, layout: &VocabLayout) -> Result<LMTrainExample> {
    if features.orig_tokens.is_empty() {
        return Err(Error::EmptyInput("original speech tokens"));
    }
    if features.tgt_tokens.is_empty() {
        return Err(Error::EmptyInput("target speech tokens"));
    }
    let text = layout.text_ids(&features.target_text)?;
    let (mut ids, mut segments) = prefix(layout, &text, &features.orig_tokens)?;
    let n_prefix = ids.len();
    push(&mut ids, &mut segments, layout.semantic_ids(&features.tgt_tokens)?, Segment::TargetSpeech);
    push(&mut ids, &mut segments, [END_ID], Segment::End);
    let loss_mask = (0..ids.len()).map(|p| p >= n_prefix).collect();
    Ok(LMTrainExample {
        version: SEQUENCE_FORMAT_VERSION,
        layout: *layout,
        ids,
        segments,
        loss_mask,
        speaker: features.speaker.vector.clone(),
    })
}

pub fn build_inference_prompt(
    original_text: Option<&str>,
    target_text: &str,
    orig_tokens: &SemanticTokenSeq,
    speaker: &SpeakerEmbedding,
    mode: PromptMode,
    layout: &VocabLayout,
) -> Result<InferencePrompt> {
    if orig_tokens.is_empty() {
        return Err(Error::EmptyInput("original speech tokens"));
    }
    let mut text = Vec::new();
    if mode == PromptMode::OneShot {
        let orig = original_text
            .ok_or_else(|| Error::Precondition("one-shot prompt requires the original text".into()))?;
        text.extend(layout.text_ids(&encode_text(orig))?);
    }
    text.extend(layout.text_ids(&encode_text(target_text))?);
    let (ids, segments) = prefix(layout, &text, orig_tokens)?;
    Ok(InferencePrompt {
        version: SEQUENCE_FORMAT_VERSION,
        layout: *layout,
        mode,
        ids,
        segments,
        speaker: speaker.vector.clone(),
    })
}

fn find(segments: &[Segment], s: Segment) -> usize {
    segments.iter().position(|&x| x == s).expect("marker present")
}

fn count(segments: &[Segment], s: Segment) -> usize {
    segments.iter().filter(|&&x| x == s).count()
}

fn check_version(v: u32) -> Result<()> {
    if v != SEQUENCE_FORMAT_VERSION {
        return Err(Error::InvalidConfig(format!(
            "sequence format version {v}, expected {SEQUENCE_FORMAT_VERSION}"
        )));
    }
    Ok(())
}

impl LMTrainExample {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn turn_index(&self) -> usize {
        find(&self.segments, Segment::Turn)
    }

    pub fn text_len(&self) -> usize {
        count(&self.segments, Segment::Text)
    }

    pub fn orig_len(&self) -> usize {
        count(&self.segments, Segment::OrigSpeech)
    }

    pub fn target_len(&self) -> usize {
        count(&self.segments, Segment::TargetSpeech)
    }

    /// Ids up to and including `Ⓣ`.
    pub fn prefix_ids(&self) -> &[u32] {
        &self.ids[..=self.turn_index()]
    }

    pub fn target_tokens(&self) -> Vec<u32> {
        self.ids
            .iter()
            .zip(&self.segments)
            .filter(|(_, &s)| s == Segment::TargetSpeech)
            .map(|(&id, _)| id - self.layout.semantic_offset)
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let e: Self = serde_json::from_str(s)?;
        check_version(e.version)?;
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.ids.len();
        if self.segments.len() != n || self.loss_mask.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "ids {n}, segments {}, mask {}",
                self.segments.len(),
                self.loss_mask.len()
            )));
        }
        for m in [Segment::Start, Segment::Speaker, Segment::Turn, Segment::End] {
            if count(&self.segments, m) != 1 {
                return Err(Error::ShapeMismatch(format!("marker {m:?} must occur once")));
            }
        }
        let (s, t, e) = (
            find(&self.segments, Segment::Start),
            self.turn_index(),
            find(&self.segments, Segment::End),
        );
        if !(s < t && t < e) {
            return Err(Error::ShapeMismatch("markers out of order".into()));
        }
        for (p, (&id, &seg)) in self.ids.iter().zip(&self.segments).enumerate() {
            if id as usize >= self.layout.size() {
                return Err(Error::VocabOutOfRange {
                    id,
                    vocab: self.layout.size(),
                });
            }
            let supervised = matches!(seg, Segment::TargetSpeech | Segment::End);
            if self.loss_mask[p] != supervised {
                return Err(Error::ShapeMismatch(format!("loss mask wrong at position {p}")));
            }
        }
        Ok(())
    }
}

impl InferencePrompt {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn turn_index(&self) -> usize {
        self.ids.len() - 1
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(s)?;
        check_version(p.version)?;
        if p.ids.last() != Some(&TURN_ID) || p.segments.len() != p.ids.len() {
            return Err(Error::ShapeMismatch("prompt must end at the turn marker".into()));
        }
        Ok(p)
    }

    /// Appends `tokens` and `Ⓔ`, supervising exactly those positions.
    pub fn into_training(self, tokens: &SemanticTokenSeq) -> Result<LMTrainExample> {
        if tokens.is_empty() {
            return Err(Error::EmptyInput("target speech tokens"));
        }
        let (mut ids, mut segments) = (self.ids, self.segments);
        let n_prefix = ids.len();
        push(&mut ids, &mut segments, self.layout.semantic_ids(tokens)?, Segment::TargetSpeech);
        push(&mut ids, &mut segments, [END_ID], Segment::End);
        let loss_mask = (0..ids.len()).map(|p| p >= n_prefix).collect();
        Ok(LMTrainExample {
            version: self.version,
            layout: self.layout,
            ids,
            segments,
            loss_mask,
            speaker: self.speaker,
        })
    }
}
