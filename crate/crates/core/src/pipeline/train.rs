use super::features::{Featurizer, PairData};
use crate::error::{Error, Result};
use crate::flow::{FlowConfig, FlowExample};
use crate::lm::LMConfig;
use crate::sequence::{LMTrainExample, PromptMode, VocabLayout};

/// `base` with vocabulary and speaker width taken from the featurizer.
pub fn fit_lm_config(base: &LMConfig, fz: &Featurizer) -> LMConfig {
    LMConfig {
        layout: VocabLayout::new(fz.codebook.size()),
        speaker_dim: fz.extractor.config().n_mels,
        ..base.clone()
    }
}

/// `base` with shapes and fill value taken from the featurizer and the
/// normalisation fitted on the training targets.
pub fn fit_flow_config(base: &FlowConfig, fz: &Featurizer, examples: &[FlowExample]) -> Result<FlowConfig> {
    let mel = fz.extractor.config();
    FlowConfig {
        n_bins: mel.n_mels,
        speaker_dim: mel.n_mels,
        codebook_size: fz.codebook.size(),
        downsample: fz.downsample(),
        fill_value: mel.log_floor(),
        ..base.clone()
    }
    .with_data_stats(examples.iter().map(|e| &e.z1))
}

/// One training sequence per pair and format, pairs outermost.
pub fn lm_examples(data: &[PairData], formats: &[PromptMode], layout: &VocabLayout) -> Result<Vec<LMTrainExample>> {
    if formats.is_empty() {
        return Err(Error::InvalidConfig("no LM training format selected".into()));
    }
    let mut out = Vec::with_capacity(data.len() * formats.len());
    for d in data {
        for &mode in formats {
            out.push(d.lm_example_as(mode, layout)?);
        }
    }
    Ok(out)
}

pub fn flow_examples(data: &[PairData], fz: &Featurizer) -> Result<Vec<FlowExample>> {
    let fill = fz.extractor.config().log_floor();
    data.iter().map(|d| d.flow_example(fz.downsample(), fill)).collect()
}

/// Plain synthesis pairs over the target sides of `data`: pair `i` reads
/// target `i` in the voice of target `i + 1` (cyclically).
pub fn tts_pairs(data: &[PairData]) -> Result<Vec<PairData>> {
    if data.len() < 2 {
        return Err(Error::EmptyInput("at least two utterances for synthesis pairs"));
    }
    Ok((0..data.len())
        .map(|i| {
            let p = &data[(i + 1) % data.len()];
            let t = &data[i];
            PairData::tts(format!("tts_{}", t.id), (&p.target_text, &p.tgt), (&t.target_text, &t.tgt))
        })
        .collect())
}
