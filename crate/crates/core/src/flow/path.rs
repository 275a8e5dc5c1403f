use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{MelSpectrogram, SemanticTokenSeq, SpeakerEmbedding};

fn same_shape(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", a.dims(), b.dims())));
    }
    Ok(())
}

/// Linear path `(1 − (1 − σ)t)·z0 + t·z1`.
pub fn ot_path(z0: &Tensor, z1: &Tensor, t: f64, sigma_min: f64) -> Result<Tensor> {
    same_shape(z0, z1)?;
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Precondition(format!("t = {t} outside [0, 1]")));
    }
    Ok(((z0 * (1.0 - (1.0 - sigma_min) * t))? + (z1 * t)?)?)
}

/// Time derivative of [`ot_path`], `z1 − (1 − σ)·z0`.
pub fn ot_target_field(z0: &Tensor, z1: &Tensor, sigma_min: f64) -> Result<Tensor> {
    same_shape(z0, z1)?;
    Ok((z1 - (z0 * (1.0 - sigma_min))?)?)
}

/// Everything the vector field sees besides the state and the time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowCondition {
    pub speaker: SpeakerEmbedding,
    /// `[μ_X, μ_Y]`.
    pub tokens: Vec<u32>,
    /// Original mel followed by the masked target block, `T_Z x B`.
    pub guide: MelSpectrogram,
    /// First frame of the target region.
    pub boundary: usize,
    pub downsample: usize,
}

impl FlowCondition {
    pub fn n_frames(&self) -> usize {
        self.guide.n_frames
    }

    pub fn target_frames(&self) -> usize {
        self.guide.n_frames - self.boundary
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.downsample;
        if r == 0 || self.tokens.len() * r != self.guide.n_frames {
            return Err(Error::ShapeMismatch(format!(
                "{} tokens at {r} frames each do not cover {} frames",
                self.tokens.len(),
                self.guide.n_frames
            )));
        }
        if self.boundary == 0 || self.boundary >= self.guide.n_frames || self.boundary % r != 0 {
            return Err(Error::ShapeMismatch(format!(
                "region boundary {} invalid for {} frames",
                self.boundary, self.guide.n_frames
            )));
        }
        Ok(())
    }
}

/// Guide `[X₁, fill…]` and token sequence `[μ_X, μ_Y]` for one pair.
pub fn build_condition(
    speaker: &SpeakerEmbedding,
    orig_tokens: &SemanticTokenSeq,
    tgt_tokens: &SemanticTokenSeq,
    orig_mel: &MelSpectrogram,
    downsample: usize,
    fill_value: f64,
) -> Result<FlowCondition> {
    if orig_tokens.is_empty() || tgt_tokens.is_empty() {
        return Err(Error::EmptyInput("semantic tokens"));
    }
    if orig_tokens.len() * downsample != orig_mel.n_frames {
        return Err(Error::ShapeMismatch(format!(
            "{} original tokens at rate {downsample} vs {} mel frames",
            orig_tokens.len(),
            orig_mel.n_frames
        )));
    }
    let masked = vec![fill_value; tgt_tokens.len() * downsample * orig_mel.n_bins];
    let guide = orig_mel.concat(&MelSpectrogram::from_data(
        masked,
        orig_mel.n_bins,
        orig_mel.frame_rate_hz,
        orig_mel.config_id.clone(),
    )?)?;
    let mut tokens = orig_tokens.ids.clone();
    tokens.extend_from_slice(&tgt_tokens.ids);
    Ok(FlowCondition {
        speaker: speaker.clone(),
        tokens,
        guide,
        boundary: orig_mel.n_frames,
        downsample,
    })
}
