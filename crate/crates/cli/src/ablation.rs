//! Four-way comparison of training stages and prompt formats on the dataset
//! pairs.

use std::path::Path;

use serde::Serialize;
use speechedit::metrics::{comparison_table, EvalReport};
use speechedit::pipeline::{
    run_edit, score_mels, AlignedMel, EditModels, EditRequest, InferenceConfig, ScoreInput, ToneTranscriber,
};
use speechedit::seed::derive_seed;
use speechedit::sequence::PromptMode;

use crate::commands::train_into;
use crate::models::{self, Generation, Stage};
use crate::{write_json, CliResult, RunConfig};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationConfig {
    pub method: &'static str,
    pub lm: Generation,
    pub flow: Generation,
    pub mode: PromptMode,
}

/// The base models only know the prompted-synthesis layout, so the first two
/// rows prompt with the original text as well.
pub fn configurations() -> Vec<AblationConfig> {
    vec![
        AblationConfig {
            method: "Base models, no edit training",
            lm: Generation::Base,
            flow: Generation::Base,
            mode: PromptMode::OneShot,
        },
        AblationConfig {
            method: "+ edit LM training",
            lm: Generation::Edit,
            flow: Generation::Base,
            mode: PromptMode::OneShot,
        },
        AblationConfig {
            method: "+ edit flow training (zero-shot in-context)",
            lm: Generation::Edit,
            flow: Generation::Edit,
            mode: PromptMode::ZeroShot,
        },
        AblationConfig {
            method: "+ edit flow training (one-shot in-context)",
            lm: Generation::Edit,
            flow: Generation::Edit,
            mode: PromptMode::OneShot,
        },
    ]
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    #[serde(flatten)]
    pub config: AblationConfig,
    pub report: EvalReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationResult {
    pub seed: u64,
    pub rows: Vec<AblationRow>,
    pub table: String,
}

/// Trains base and edit models under `out/checkpoints`, edits every dataset
/// pair under each configuration and writes `ablation.json` and
/// `ablation.md` to `out`.
pub fn ablate(cfg: &RunConfig, out: &Path) -> CliResult<AblationResult> {
    let ckpt = out.join("checkpoints");
    train_into(cfg, &ckpt, Stage::Base, false)?;
    train_into(cfg, &ckpt, Stage::Both, false)?;
    cfg.write_snapshot(out)?;

    let pairs = models::load_pairs(cfg)?;
    let fz = models::load_featurizer(cfg, &ckpt)?;
    let tr = ToneTranscriber::from_synthetic(&cfg.synthetic, &fz.extractor)?;
    let refs = pairs
        .iter()
        .map(|p| Ok((fz.mel(p.target_speech())?, fz.extractor.compute(p.original_speech())?)))
        .collect::<CliResult<Vec<_>>>()?;

    let mut rows = Vec::new();
    for c in configurations() {
        let lm = models::load_lm(&ckpt, c.lm)?;
        let flow = models::load_flow(&ckpt, c.flow)?;
        let m = EditModels {
            featurizer: &fz,
            lm: &lm,
            flow: &flow,
        };
        let inference = InferenceConfig {
            mode: c.mode,
            ..cfg.inference.clone()
        };
        let mut scores = Vec::with_capacity(pairs.len());
        for (i, (p, (reference, orig_mel))) in pairs.iter().zip(&refs).enumerate() {
            let orig_text = p.original.text();
            let tgt_text = p.target.text();
            let req = EditRequest {
                original: p.original_speech(),
                original_text: Some(&orig_text),
                target_text: &tgt_text,
            };
            let res = run_edit(&m, &req, &inference, derive_seed(cfg.seed, i as u64))?;
            let input = ScoreInput {
                id: &p.id,
                target_text: &tgt_text,
                reference,
                hypothesis: &res.mel,
                window_s: fz.extractor.config().window_s(),
                original: Some(AlignedMel {
                    mel: orig_mel,
                    words: &p.original.words,
                    intervals: &p.original.intervals,
                }),
            };
            scores.push(score_mels(&input, &tr)?.0);
        }
        let report = EvalReport::new(scores, Default::default());
        tracing::info!(method = c.method, wer = ?report.mean.wer, mcd = ?report.mean.mcd, "ablation row");
        rows.push(AblationRow { config: c, report });
    }
    let named: Vec<(String, &EvalReport)> = rows.iter().map(|r| (r.config.method.to_string(), &r.report)).collect();
    let table = comparison_table(&named);
    let result = AblationResult {
        seed: cfg.seed,
        rows,
        table,
    };
    write_json(&out.join("ablation.json"), &result)?;
    std::fs::write(out.join("ablation.md"), &result.table)?;
    Ok(result)
}
