//! Checkpoint directory layout, stage training and model loading.
//!
//! ```text
//! <checkpoints>/codebook.json
//! <checkpoints>/{base_lm,base_flow,lm,flow}.ckpt
//! <checkpoints>/{base_lm,base_flow,lm,flow}_log.csv
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use speechedit::dataset::{load_pair, read_manifest, EditPair};
use speechedit::features::Codebook;
use speechedit::flow::{train_flow, FlowNet};
use speechedit::lm::{train_lm, EditorLm, LmTrainState, TrainLogRow};
use speechedit::nn::{AdamW, Checkpoint};
use speechedit::pipeline::{
    fit_flow_config, fit_lm_config, flow_examples, lm_examples, tts_pairs, Featurizer, PairData,
};
use speechedit::seed::derive_seed;
use speechedit::sequence::PromptMode;

use crate::{require, CliError, CliResult, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// Plain-synthesis models that the edit models start from.
    Base,
    Lm,
    Flow,
    Both,
}

impl Stage {
    pub fn lm(self) -> bool {
        matches!(self, Stage::Lm | Stage::Both)
    }

    pub fn flow(self) -> bool {
        matches!(self, Stage::Flow | Stage::Both)
    }
}

/// Which of the two model generations a checkpoint holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Generation {
    Base,
    Edit,
}

impl Generation {
    fn lm_name(self) -> &'static str {
        match self {
            Generation::Base => "base_lm",
            Generation::Edit => "lm",
        }
    }

    fn flow_name(self) -> &'static str {
        match self {
            Generation::Base => "base_flow",
            Generation::Edit => "flow",
        }
    }
}

pub fn ckpt_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.ckpt"))
}

pub fn lm_path(dir: &Path, g: Generation) -> PathBuf {
    ckpt_path(dir, g.lm_name())
}

pub fn flow_path(dir: &Path, g: Generation) -> PathBuf {
    ckpt_path(dir, g.flow_name())
}

pub fn manifest_path(cfg: &RunConfig) -> PathBuf {
    cfg.dataset_dir().join("manifest.jsonl")
}

pub fn load_pairs(cfg: &RunConfig) -> CliResult<Vec<EditPair>> {
    let manifest = manifest_path(cfg);
    require(&manifest, "dataset manifest")?;
    let dir = cfg.dataset_dir();
    let sr = cfg.features.mel.sample_rate;
    read_manifest(&manifest)?
        .iter()
        .map(|e| load_pair(&dir, e, sr).map_err(CliError::from))
        .collect()
}

/// Loads `codebook.json` from `dir`, fitting and saving it first if absent.
pub fn featurizer(cfg: &RunConfig, dir: &Path, pairs: &[EditPair]) -> CliResult<Featurizer> {
    let path = dir.join("codebook.json");
    if path.exists() {
        return Ok(Featurizer::new(cfg.features.mel.clone(), Codebook::load(&path)?)?);
    }
    let fz = Featurizer::fit(&cfg.features, pairs, derive_seed(cfg.seed, 0xC0DE))?;
    std::fs::create_dir_all(dir)?;
    fz.codebook.save(&path)?;
    Ok(fz)
}

pub fn load_featurizer(cfg: &RunConfig, dir: &Path) -> CliResult<Featurizer> {
    let path = dir.join("codebook.json");
    require(&path, "codebook")?;
    Ok(Featurizer::new(cfg.features.mel.clone(), Codebook::load(&path)?)?)
}

fn write_log(path: &Path, rows: &[TrainLogRow], keep_through: Option<u64>) -> CliResult<()> {
    let mut all: Vec<TrainLogRow> = Vec::new();
    if let Some(step) = keep_through {
        if path.exists() {
            let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Runtime(e.into()))?;
            for row in r.deserialize() {
                let row: TrainLogRow = row.map_err(|e| CliError::Runtime(e.into()))?;
                if row.step <= step {
                    all.push(row);
                }
            }
        }
    }
    all.extend_from_slice(rows);
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Runtime(e.into()))?;
    for r in &all {
        w.serialize(r).map_err(|e| CliError::Runtime(e.into()))?;
    }
    w.flush()?;
    Ok(())
}

fn save_ckpt(mut ck: Checkpoint, opt: &AdamW, path: &Path) -> CliResult<()> {
    ck.optimizer = opt.export_state()?;
    ck.save(path)?;
    Ok(())
}

fn resume_opt(ck: &Checkpoint, cfg: &speechedit::nn::AdamWConfig) -> CliResult<AdamW> {
    let mut o = AdamW::new(cfg.clone());
    o.import_state(ck.step, &ck.optimizer)?;
    Ok(o)
}

/// What a training stage wrote.
#[derive(Debug, Clone, Serialize)]
pub struct StageReport {
    pub name: String,
    pub examples: usize,
    pub steps: u64,
    pub final_loss: Option<f64>,
    pub resumed_from: Option<u64>,
    pub initialised_from: Option<String>,
}

/// Trains the LM of generation `g` into `dir`. The edit LM starts from the
/// base LM when one exists.
pub fn train_lm_stage(
    cfg: &RunConfig,
    dir: &Path,
    fz: &Featurizer,
    data: &[PairData],
    g: Generation,
    resume: bool,
) -> CliResult<StageReport> {
    let name = g.lm_name();
    let path = ckpt_path(dir, name);
    let mut tc = cfg.lm_train.clone();
    let (pairs, formats) = match g {
        Generation::Base => {
            tc.epochs = cfg.base.lm_epochs;
            (tts_pairs(data)?, vec![PromptMode::OneShot])
        }
        Generation::Edit => (data.to_vec(), cfg.lm_formats.clone()),
    };
    let base_path = lm_path(dir, Generation::Base);
    let mut report = StageReport {
        name: name.into(),
        examples: 0,
        steps: 0,
        final_loss: None,
        resumed_from: None,
        initialised_from: None,
    };
    let (model, state) = if resume && path.exists() {
        let ck = Checkpoint::load(&path)?;
        report.resumed_from = Some(ck.step);
        (EditorLm::from_checkpoint(&ck)?, Some(LmTrainState { optimizer: resume_opt(&ck, &tc.adamw)? }))
    } else if g == Generation::Edit && base_path.exists() {
        report.initialised_from = Some(base_path.display().to_string());
        (EditorLm::from_checkpoint(&Checkpoint::load(&base_path)?)?, None)
    } else {
        let lm = fit_lm_config(&cfg.lm, fz);
        let lm = speechedit::lm::LMConfig { seed: derive_seed(cfg.seed, 0x11), ..lm };
        (EditorLm::new(lm)?, None)
    };
    let examples = lm_examples(&pairs, &formats, &model.config.layout)?;
    report.examples = examples.len();
    let meta = serde_json::json!({ "stage": name, "seed": cfg.seed });
    let keep = report.resumed_from;
    let (log, opt) = train_lm(&model, &examples, &tc, derive_seed(cfg.seed, 0x12), state, |m, o| {
        save_ckpt(m.to_checkpoint(o.step, meta.clone())?, o, &path).map_err(|e| speechedit::Error::Checkpoint(e.to_string()))
    })?;
    write_log(&dir.join(format!("{name}_log.csv")), &log, keep)?;
    report.steps = opt.step;
    report.final_loss = log.last().map(|r| r.loss);
    Ok(report)
}

/// Trains the flow of generation `g` into `dir` on ground-truth tokens. The
/// edit flow starts from the base flow when one exists.
pub fn train_flow_stage(
    cfg: &RunConfig,
    dir: &Path,
    fz: &Featurizer,
    data: &[PairData],
    g: Generation,
    resume: bool,
) -> CliResult<StageReport> {
    let name = g.flow_name();
    let path = ckpt_path(dir, name);
    let mut tc = cfg.flow_train.clone();
    let pairs = match g {
        Generation::Base => {
            tc.epochs = cfg.base.flow_epochs;
            tts_pairs(data)?
        }
        Generation::Edit => data.to_vec(),
    };
    let examples = flow_examples(&pairs, fz)?;
    let base_path = flow_path(dir, Generation::Base);
    let mut report = StageReport {
        name: name.into(),
        examples: examples.len(),
        steps: 0,
        final_loss: None,
        resumed_from: None,
        initialised_from: None,
    };
    let (net, state) = if resume && path.exists() {
        let ck = Checkpoint::load(&path)?;
        report.resumed_from = Some(ck.step);
        (FlowNet::from_checkpoint(&ck)?, Some(resume_opt(&ck, &tc.adamw)?))
    } else if g == Generation::Edit && base_path.exists() {
        report.initialised_from = Some(base_path.display().to_string());
        (FlowNet::from_checkpoint(&Checkpoint::load(&base_path)?)?, None)
    } else {
        let fc = fit_flow_config(&cfg.flow, fz, &examples)?;
        let fc = speechedit::flow::FlowConfig { seed: derive_seed(cfg.seed, 0x21), ..fc };
        (FlowNet::new(fc)?, None)
    };
    let meta = serde_json::json!({ "stage": name, "seed": cfg.seed });
    let keep = report.resumed_from;
    let (log, opt) = train_flow(&net, &examples, &tc, derive_seed(cfg.seed, 0x22), state, |m, o| {
        save_ckpt(m.to_checkpoint(o.step, meta.clone())?, o, &path).map_err(|e| speechedit::Error::Checkpoint(e.to_string()))
    })?;
    write_log(&dir.join(format!("{name}_log.csv")), &log, keep)?;
    report.steps = opt.step;
    report.final_loss = log.last().map(|r| r.loss);
    Ok(report)
}

pub fn load_lm(dir: &Path, g: Generation) -> CliResult<EditorLm> {
    let p = lm_path(dir, g);
    require(&p, "LM checkpoint")?;
    Ok(EditorLm::from_checkpoint(&Checkpoint::load(&p)?)?)
}

pub fn load_flow(dir: &Path, g: Generation) -> CliResult<FlowNet> {
    let p = flow_path(dir, g);
    require(&p, "flow checkpoint")?;
    Ok(FlowNet::from_checkpoint(&Checkpoint::load(&p)?)?)
}
