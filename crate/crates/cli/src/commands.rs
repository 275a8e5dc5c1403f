use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use speechedit::audio::AudioClip;
use speechedit::corpus::{generate_synthetic_corpus, load_alignment, load_corpus_dir};
use speechedit::dataset::{build_manifest, read_manifest, ManifestSummary};
use speechedit::features::{MelExtractor, MelSpectrogram};
use speechedit::lm::DecodeStatus;
use speechedit::metrics::{mae_mos, read_scores, region_mcd, EvalReport, UttScores};
use speechedit::pipeline::{
    hypothesis_regions, run_edit, score_mels, AlignedMel, EditModels, EditOutput, EditRequest, ScoreInput,
    ToneTranscriber, Transcriber,
};
use speechedit::postprocess::{replace_unedited, trim_fades};
use speechedit::seed::derive_seed;
use speechedit::sequence::PromptMode;

use crate::models::{self, Generation, Stage, StageReport};
use crate::{require, sha256_file, write_json, CliError, CliResult, RunConfig};

fn read_clip(path: &Path, sample_rate: u32) -> CliResult<AudioClip> {
    require(path, "audio file")?;
    Ok(AudioClip::read_wav(path)?.resample(sample_rate))
}

/// Writes the synthetic tone corpus as WAV plus alignment JSON files.
pub fn synth(cfg: &RunConfig, out: Option<&Path>) -> CliResult<PathBuf> {
    let dir = out.map_or_else(|| cfg.corpus_dir(), Path::to_path_buf);
    cfg.synthetic
        .validate()
        .map_err(|e| CliError::Usage(format!("synthetic corpus: {e}")))?;
    let corpus = generate_synthetic_corpus(&cfg.synthetic, cfg.seed)?;
    std::fs::create_dir_all(&dir)?;
    for u in &corpus {
        u.save(&dir)?;
    }
    cfg.write_snapshot(&dir)?;
    tracing::info!(utterances = corpus.len(), dir = %dir.display(), "corpus written");
    Ok(dir)
}

#[derive(Debug, Clone, Serialize)]
pub struct DatasetReport {
    pub summary: ManifestSummary,
    pub manifest_sha256: String,
}

/// Builds edit pairs from the corpus directory into the dataset directory.
/// Nothing is written when the corpus cannot be read.
pub fn build_dataset(cfg: &RunConfig) -> CliResult<DatasetReport> {
    let corpus_dir = cfg.corpus_dir();
    if !corpus_dir.is_dir() {
        return Err(CliError::Usage(format!("corpus directory not found: {}", corpus_dir.display())));
    }
    let corpus = load_corpus_dir(&corpus_dir, cfg.features.mel.sample_rate)
        .map_err(|e| CliError::Usage(format!("cannot load corpus {}: {e}", corpus_dir.display())))?;
    if corpus.is_empty() {
        return Err(CliError::Usage(format!("no alignments in {}", corpus_dir.display())));
    }
    let out = cfg.dataset_dir();
    let summary = build_manifest(&corpus, &cfg.dataset.mix, &cfg.dataset.spans, cfg.seed, &out)?;
    cfg.write_snapshot(&out)?;
    let manifest_sha256 = sha256_file(&summary.manifest)?;
    Ok(DatasetReport {
        summary,
        manifest_sha256,
    })
}

/// Trains the requested stage into the checkpoint directory.
pub fn train(cfg: &RunConfig, stage: Stage, resume: bool) -> CliResult<Vec<StageReport>> {
    let dir = cfg.checkpoint_dir();
    train_into(cfg, &dir, stage, resume)
}

pub fn train_into(cfg: &RunConfig, dir: &Path, stage: Stage, resume: bool) -> CliResult<Vec<StageReport>> {
    let pairs = models::load_pairs(cfg)?;
    if pairs.is_empty() {
        return Err(CliError::Usage("the dataset manifest is empty".into()));
    }
    std::fs::create_dir_all(dir)?;
    cfg.write_snapshot(dir)?;
    let fz = models::featurizer(cfg, dir, &pairs)?;
    let data = fz.pairs(&pairs)?;
    let mut out = Vec::new();
    if stage == Stage::Base {
        out.push(models::train_lm_stage(cfg, dir, &fz, &data, Generation::Base, resume)?);
        out.push(models::train_flow_stage(cfg, dir, &fz, &data, Generation::Base, resume)?);
    }
    if stage.lm() {
        out.push(models::train_lm_stage(cfg, dir, &fz, &data, Generation::Edit, resume)?);
    }
    if stage.flow() {
        out.push(models::train_flow_stage(cfg, dir, &fz, &data, Generation::Edit, resume)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditMeta {
    pub id: String,
    pub mode: PromptMode,
    pub seed: u64,
    pub orig_tokens: usize,
    pub decoded_tokens: usize,
    pub mel_frames: usize,
    pub status: DecodeStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<u32>>,
}

/// One line of an evaluation list. Paths are relative to the list file
/// unless absolute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    pub id: String,
    /// Ground-truth target speech (WAV).
    pub reference: String,
    pub reference_text: String,
    /// Generated speech: a WAV, or a mel JSON written by `edit`.
    pub hypothesis: String,
    /// Original recording (WAV) with its alignment JSON next to it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub original: Option<String>,
    /// Alignment JSON of the hypothesis; the transcriber is used without one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hypothesis_alignment: Option<String>,
}

pub struct EditArgs {
    pub original: Option<PathBuf>,
    pub original_text: Option<String>,
    pub target_text: Option<String>,
    /// Manifest to edit in batch instead of a single request.
    pub pairs: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub dump_tokens: bool,
}

fn write_edit(out: &Path, id: &str, res: &EditOutput, cfg: &RunConfig, seed: u64, dump: bool) -> CliResult<EditMeta> {
    let mel_path = out.join("mels").join(format!("{id}.mel.json"));
    write_json(&mel_path, &res.mel)?;
    let meta = EditMeta {
        id: id.to_string(),
        mode: cfg.inference.mode,
        seed,
        orig_tokens: res.orig_tokens.len(),
        decoded_tokens: res.tokens.len(),
        mel_frames: res.mel.n_frames,
        status: res.status,
        tokens: dump.then(|| res.tokens.clone()),
    };
    write_json(&out.join("mels").join(format!("{id}.meta.json")), &meta)?;
    Ok(meta)
}

/// Single edit or a batch over a manifest. Batch runs also write
/// `eval_pairs.jsonl` for `evaluate`.
pub fn edit(cfg: &RunConfig, args: &EditArgs) -> CliResult<Vec<EditMeta>> {
    let one_shot = cfg.inference.mode == PromptMode::OneShot;
    if args.pairs.is_none() {
        if args.original.is_none() || args.target_text.is_none() {
            return Err(CliError::Usage("edit needs --original and --target-text, or --pairs".into()));
        }
        if one_shot && args.original_text.is_none() {
            return Err(CliError::Usage("one-shot editing requires --original-text".into()));
        }
    }
    if let Some(p) = &args.pairs {
        require(p, "pairs manifest")?;
    }
    if let Some(p) = &args.original {
        require(p, "original audio")?;
    }
    let dir = cfg.checkpoint_dir();
    let fz = models::load_featurizer(cfg, &dir)?;
    let lm = models::load_lm(&dir, Generation::Edit)?;
    let flow = models::load_flow(&dir, Generation::Edit)?;
    let m = EditModels {
        featurizer: &fz,
        lm: &lm,
        flow: &flow,
    };
    let out = args.out.clone().unwrap_or_else(|| cfg.output_dir().join("edit"));
    std::fs::create_dir_all(&out)?;
    cfg.write_snapshot(&out)?;
    let sr = cfg.features.mel.sample_rate;

    let Some(manifest) = &args.pairs else {
        let clip = read_clip(args.original.as_ref().expect("checked"), sr)?;
        let req = EditRequest {
            original: &clip,
            original_text: args.original_text.as_deref(),
            target_text: args.target_text.as_deref().expect("checked"),
        };
        let res = run_edit(&m, &req, &cfg.inference, cfg.seed)?;
        return Ok(vec![write_edit(&out, "edit", &res, cfg, cfg.seed, args.dump_tokens)?]);
    };

    let base = manifest.parent().unwrap_or(Path::new("."));
    let entries = read_manifest(manifest)?;
    let mut metas = Vec::new();
    let mut items = Vec::new();
    for (i, e) in entries.iter().enumerate() {
        let orig_path = base.join(&e.orig_wav);
        let clip = read_clip(&orig_path, sr)?;
        let seed = derive_seed(cfg.seed, i as u64);
        let req = EditRequest {
            original: &clip,
            original_text: Some(&e.orig_text),
            target_text: &e.tgt_text,
        };
        let res = run_edit(&m, &req, &cfg.inference, seed)?;
        tracing::info!(id = %e.id, tokens = res.tokens.len(), "edited");
        metas.push(write_edit(&out, &e.id, &res, cfg, seed, args.dump_tokens)?);
        let abs = |p: &str| std::path::absolute(base.join(p)).unwrap_or_else(|_| base.join(p));
        items.push(EvalItem {
            id: e.id.clone(),
            reference: abs(&e.tgt_wav).display().to_string(),
            reference_text: e.tgt_text.clone(),
            hypothesis: format!("mels/{}.mel.json", e.id),
            original: Some(abs(&e.orig_wav).display().to_string()),
            hypothesis_alignment: None,
        });
    }
    speechedit::dataset::write_jsonl(&out.join("eval_pairs.jsonl"), &items)?;
    Ok(metas)
}

/// External MOS predictions for one predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct MosFiles {
    pub name: String,
    pub generated: PathBuf,
    pub reference: PathBuf,
}

impl std::str::FromStr for MosFiles {
    type Err = String;

    /// `NAME=GENERATED.jsonl,REFERENCE.jsonl`
    fn from_str(s: &str) -> Result<Self, String> {
        let (name, files) = s.split_once('=').ok_or("expected NAME=GEN,REF")?;
        let (g, r) = files.split_once(',').ok_or("expected NAME=GEN,REF")?;
        Ok(Self {
            name: name.to_string(),
            generated: g.into(),
            reference: r.into(),
        })
    }
}

pub struct EvaluateArgs {
    pub pairs: PathBuf,
    pub replace: bool,
    pub out: Option<PathBuf>,
    pub mos: Vec<MosFiles>,
}

fn is_wav(p: &str) -> bool {
    Path::new(p).extension().is_some_and(|x| x.eq_ignore_ascii_case("wav"))
}

pub fn read_eval_items(path: &Path) -> CliResult<Vec<EvalItem>> {
    require(path, "evaluation list")?;
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| CliError::Usage(format!("{}: {e}", path.display()))))
        .collect()
}

/// Scores one evaluation item.
pub fn score_item(
    item: &EvalItem,
    base: &Path,
    ex: &MelExtractor,
    transcriber: &dyn Transcriber,
    replace: bool,
    fade_ms: f64,
) -> CliResult<UttScores> {
    let sr = ex.config().sample_rate;
    let reference = ex.compute(&read_clip(&base.join(&item.reference), sr)?)?;
    let original = match &item.original {
        Some(p) => {
            let wav = base.join(p);
            let a = load_alignment(&wav.with_extension("json"), sr)
                .map_err(|e| CliError::Usage(format!("alignment for {}: {e}", wav.display())))?;
            let mel = ex.compute(&a.audio)?;
            Some((a, mel))
        }
        None => None,
    };
    let aligned = original.as_ref().map(|(a, mel)| AlignedMel {
        mel,
        words: &a.words,
        intervals: &a.intervals,
    });

    if !is_wav(&item.hypothesis) {
        if replace {
            return Err(CliError::Usage(format!("--replace needs a waveform hypothesis, got {}", item.hypothesis)));
        }
        let path = base.join(&item.hypothesis);
        require(&path, "hypothesis mel")?;
        let hyp: MelSpectrogram = serde_json::from_str(&std::fs::read_to_string(&path)?)?;
        let input = ScoreInput {
            id: &item.id,
            target_text: &item.reference_text,
            reference: &reference,
            hypothesis: &hyp,
            window_s: ex.config().window_s(),
            original: aligned,
        };
        return Ok(score_mels(&input, transcriber)?.0);
    }

    let mut hyp_wav = read_clip(&base.join(&item.hypothesis), sr)?;
    let hyp_mel = ex.compute(&hyp_wav)?;
    let mut regions = None;
    if let Some(orig) = &aligned {
        let transcript = match &item.hypothesis_alignment {
            Some(p) => {
                let a = load_alignment(&base.join(p), sr)?;
                speechedit::pipeline::Transcript {
                    words: a.words,
                    intervals: a.intervals,
                }
            }
            None => transcriber.transcribe(&hyp_mel)?,
        };
        regions = Some(hypothesis_regions(orig, &transcript)?);
    } else if replace {
        return Err(CliError::Usage(format!("--replace needs the original recording for {}", item.id)));
    }
    let mut measured = regions.clone().unwrap_or_default();
    if replace {
        let (orig, _) = original.as_ref().expect("checked");
        let r = regions.as_ref().expect("checked");
        let out = replace_unedited(&hyp_wav, &orig.audio, r, fade_ms)?;
        if out.hard_cuts > 0 {
            tracing::warn!(id = %item.id, cuts = out.hard_cuts, "regions too short for the fade");
        }
        hyp_wav = out.clip;
        measured = trim_fades(r, fade_ms, hyp_wav.duration_s());
    }
    let hyp = ex.compute(&hyp_wav)?;
    let input = ScoreInput {
        id: &item.id,
        target_text: &item.reference_text,
        reference: &reference,
        hypothesis: &hyp,
        window_s: ex.config().window_s(),
        original: None,
    };
    let (mut s, _) = score_mels(&input, transcriber)?;
    if let Some((orig, _)) = &original {
        if !measured.is_empty() {
            s.region_mcd = region_mcd(&orig.audio, &hyp_wav, &measured, ex).ok();
        }
    }
    Ok(s)
}

fn mos_scores(mos: &[MosFiles], base: &Path) -> CliResult<(BTreeMap<String, f64>, BTreeMap<String, f64>)> {
    let (mut mae, mut mean) = (BTreeMap::new(), BTreeMap::new());
    for m in mos {
        let (g, r) = (base.join(&m.generated), base.join(&m.reference));
        if !g.exists() || !r.exists() {
            tracing::warn!(predictor = %m.name, "score file missing; MOS columns omitted");
            continue;
        }
        let (gen, reference) = (read_scores(&g)?, read_scores(&r)?);
        mae.insert(m.name.clone(), mae_mos(&gen, &reference)?);
        mean.insert(m.name.clone(), gen.values().sum::<f64>() / gen.len() as f64);
    }
    Ok((mae, mean))
}

/// Scores an evaluation list and writes `report.json` and `report.txt`.
pub fn evaluate(cfg: &RunConfig, args: &EvaluateArgs) -> CliResult<EvalReport> {
    let items = read_eval_items(&args.pairs)?;
    let base = args.pairs.parent().unwrap_or(Path::new(".")).to_path_buf();
    let ex = MelExtractor::new(cfg.features.mel.clone()).map_err(|e| CliError::Usage(e.to_string()))?;
    let tr = ToneTranscriber::from_synthetic(&cfg.synthetic, &ex)?;
    let scores = items
        .iter()
        .map(|it| score_item(it, &base, &ex, &tr, args.replace, cfg.evaluation.fade_ms))
        .collect::<CliResult<Vec<_>>>()?;
    let (mae, mean) = mos_scores(&args.mos, Path::new("."))?;
    let mut report = EvalReport::new(scores, mae);
    report.mos = mean;
    let out = args.out.clone().unwrap_or_else(|| cfg.output_dir().join("eval"));
    cfg.write_snapshot(&out)?;
    write_json(&out.join("report.json"), &report)?;
    std::fs::write(out.join("report.txt"), report.to_table())?;
    Ok(report)
}
