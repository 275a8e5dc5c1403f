use super::transcribe::{Transcriber, Transcript};
use crate::corpus::compute_edit_script;
use crate::error::Result;
use crate::features::{speaker_embed, MelSpectrogram};
use crate::metrics::{mcd_dtw, region_mcd_mel, spk_sim, wer, UttScores};
use crate::postprocess::{map_word_regions, RegionPairList};

/// Original recording with its word alignment.
pub struct AlignedMel<'a> {
    pub mel: &'a MelSpectrogram,
    pub words: &'a [String],
    pub intervals: &'a [(f64, f64)],
}

pub struct ScoreInput<'a> {
    pub id: &'a str,
    pub target_text: &'a str,
    /// Ground-truth target speech.
    pub reference: &'a MelSpectrogram,
    pub hypothesis: &'a MelSpectrogram,
    /// Analysis window of both mels, seconds.
    pub window_s: f64,
    pub original: Option<AlignedMel<'a>>,
}

/// Kept-word regions between the original and what `hyp` actually says.
pub fn hypothesis_regions(orig: &AlignedMel<'_>, hyp: &Transcript) -> Result<RegionPairList> {
    let script = compute_edit_script(orig.words, &hyp.words);
    map_word_regions((orig.words, orig.intervals), (&hyp.words, &hyp.intervals), &script)
}

/// WER of the transcribed hypothesis, speaker similarity and MCD against the
/// reference and, given the original, MCD over the regions the hypothesis
/// kept. Scores that need a non-empty hypothesis are left out otherwise.
pub fn score_mels(input: &ScoreInput<'_>, transcriber: &dyn Transcriber) -> Result<(UttScores, Transcript)> {
    let hyp = input.hypothesis;
    let transcript = transcriber.transcribe(hyp)?;
    let mut s = UttScores {
        id: input.id.to_string(),
        wer: Some(wer(input.target_text, &transcript.text())),
        ..Default::default()
    };
    if !hyp.is_empty() {
        s.spk_sim = Some(spk_sim(&speaker_embed(hyp)?, &speaker_embed(input.reference)?)?);
        s.mcd = Some(mcd_dtw(input.reference, hyp)?);
        if let Some(orig) = &input.original {
            let regions = hypothesis_regions(orig, &transcript)?;
            if !regions.is_empty() {
                s.region_mcd = region_mcd_mel(orig.mel, hyp, &regions, input.window_s).ok();
            }
        }
    }
    Ok((s, transcript))
}
