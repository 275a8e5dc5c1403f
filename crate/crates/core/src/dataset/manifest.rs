use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pairs::{
    build_deletion_pair, build_insertion_pair, build_multiedit_pair, build_substitution_pair, EditPair,
    EditTask, Provenance, TargetSpan,
};
use super::sampler::{sample_spans, SpanSamplerConfig};
use crate::corpus::{load_alignment, AlignedUtterance};
use crate::error::{Error, Result};
use crate::seed::derive_seed;

pub type TaskMix = BTreeMap<EditTask, f64>;

pub fn equal_mix() -> TaskMix {
    EditTask::ALL.iter().map(|&t| (t, 0.25)).collect()
}

pub fn validate_mix(mix: &TaskMix) -> Result<()> {
    if mix.values().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::InvalidConfig(format!("task proportions must be non-negative: {mix:?}")));
    }
    let total: f64 = mix.values().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidConfig(format!("task proportions sum to {total}, expected 1")));
    }
    Ok(())
}

/// One line of `manifest.jsonl`. Paths are relative to the manifest directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub task: EditTask,
    pub orig_wav: String,
    pub orig_text: String,
    pub tgt_wav: String,
    pub tgt_text: String,
    pub spans: Vec<[usize; 2]>,
    pub src_utt: String,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ManifestSummary {
    pub n_utterances: usize,
    pub n_pairs: usize,
    pub per_task: BTreeMap<EditTask, usize>,
    pub skipped: BTreeMap<EditTask, usize>,
    pub manifest: PathBuf,
}

impl ManifestSummary {
    pub fn total_skipped(&self) -> usize {
        self.skipped.values().sum()
    }
}

fn draw_task(mix: &TaskMix, rng: &mut ChaCha8Rng) -> EditTask {
    let x: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = EditTask::Insert;
    for (&task, &p) in mix {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = task;
        if x < acc {
            return task;
        }
    }
    last
}

/// Draws a task, a span count and spans for `u`, then builds the pair.
pub fn build_pair_for(
    u: &AlignedUtterance,
    mix: &TaskMix,
    config: &SpanSamplerConfig,
    seed: u64,
) -> (EditTask, Result<EditPair>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let task = draw_task(mix, &mut rng);
    let (lo, hi) = config.spans_per_utt;
    let result = match task {
        EditTask::Insert | EditTask::Delete => {
            let k = rng.random_range(lo..=hi);
            sample_spans(u, k, config, derive_seed(seed, 1)).and_then(|spans| {
                if task == EditTask::Insert {
                    build_insertion_pair(u, &spans, seed)
                } else {
                    build_deletion_pair(u, &spans, seed)
                }
            })
        }
        EditTask::Substitute => sample_spans(u, 1, &config.with_min_len(2), derive_seed(seed, 1))
            .and_then(|spans| build_substitution_pair(u, spans[0].clone(), seed)),
        EditTask::Multi => {
            let k = rng.random_range(lo.max(2)..=hi.max(2));
            sample_spans(u, k, &config.with_min_len(2), derive_seed(seed, 1))
                .and_then(|spans| build_multiedit_pair(u, &spans, seed))
        }
    };
    (task, result)
}

/// Builds pairs for every utterance and writes `manifest.jsonl`,
/// `summary.json` and `wavs/` under `out`. Output order follows utterance id.
pub fn build_manifest(
    corpus: &[AlignedUtterance],
    mix: &TaskMix,
    config: &SpanSamplerConfig,
    seed: u64,
    out: &Path,
) -> Result<ManifestSummary> {
    if corpus.is_empty() {
        return Err(Error::EmptyInput("corpus"));
    }
    validate_mix(mix)?;
    config.validate()?;
    let wav_dir = out.join("wavs");
    std::fs::create_dir_all(&wav_dir).map_err(|e| Error::io(&wav_dir, e))?;

    let mut order: Vec<&AlignedUtterance> = corpus.iter().collect();
    order.sort_by(|a, b| a.id.cmp(&b.id));

    let built: Vec<(EditTask, Result<Option<ManifestEntry>>)> = order
        .par_iter()
        .enumerate()
        .map(|(index, u)| {
            let (task, pair) = build_pair_for(u, mix, config, derive_seed(seed, index as u64));
            let entry = match pair {
                Ok(p) => write_pair(&p, out).map(Some),
                Err(Error::Infeasible(msg)) => {
                    tracing::debug!(utt = %u.id, %task, "skipped: {msg}");
                    Ok(None)
                }
                Err(e) => Err(e),
            };
            (task, entry)
        })
        .collect();

    let mut summary = ManifestSummary {
        n_utterances: corpus.len(),
        manifest: out.join("manifest.jsonl"),
        ..Default::default()
    };
    for t in EditTask::ALL {
        summary.per_task.insert(t, 0);
        summary.skipped.insert(t, 0);
    }
    let mut lines = String::new();
    for (task, entry) in built {
        match entry? {
            Some(e) => {
                *summary.per_task.get_mut(&task).unwrap() += 1;
                lines.push_str(&serde_json::to_string(&e)?);
                lines.push('\n');
            }
            None => *summary.skipped.get_mut(&task).unwrap() += 1,
        }
    }
    summary.n_pairs = summary.per_task.values().sum();
    std::fs::write(&summary.manifest, lines).map_err(|e| Error::io(&summary.manifest, e))?;
    let summary_path = out.join("summary.json");
    let mut rel = summary.clone();
    rel.manifest = PathBuf::from("manifest.jsonl");
    std::fs::write(&summary_path, serde_json::to_string_pretty(&rel)?)
        .map_err(|e| Error::io(&summary_path, e))?;
    tracing::info!(pairs = summary.n_pairs, skipped = summary.total_skipped(), "manifest written");
    Ok(summary)
}

/// Writes both sides of `pair` (WAV plus alignment JSON) under `out/wavs`.
pub fn write_pair(pair: &EditPair, out: &Path) -> Result<ManifestEntry> {
    let wav_dir = out.join("wavs");
    pair.original.save(&wav_dir)?;
    pair.target.save(&wav_dir)?;
    Ok(ManifestEntry {
        id: pair.id.clone(),
        task: pair.task,
        orig_wav: format!("wavs/{}.wav", pair.original.id),
        orig_text: pair.original.text(),
        tgt_wav: format!("wavs/{}.wav", pair.target.id),
        tgt_text: pair.target.text(),
        spans: pair
            .target_spans
            .iter()
            .map(|s| [s.words.start, s.words.end])
            .collect(),
        src_utt: pair.provenance.src_utt.clone(),
        seed: pair.provenance.seed,
    })
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

fn sidecar(dir: &Path, wav: &str) -> PathBuf {
    dir.join(wav).with_extension("json")
}

/// Reconstructs a pair from its manifest entry and the alignment sidecars.
pub fn load_pair(manifest_dir: &Path, entry: &ManifestEntry, sample_rate: u32) -> Result<EditPair> {
    let mut original = load_alignment(&sidecar(manifest_dir, &entry.orig_wav), sample_rate)?;
    let mut target = load_alignment(&sidecar(manifest_dir, &entry.tgt_wav), sample_rate)?;
    original.id = format!("{}_orig", entry.id);
    target.id = format!("{}_tgt", entry.id);
    let target_spans = entry
        .spans
        .iter()
        .map(|&[s, e]| {
            let words: Range<usize> = s..e;
            let time = if words.is_empty() {
                let t = if s < target.len() {
                    target.intervals[s].0
                } else {
                    target.duration_s()
                };
                (t, t)
            } else {
                (target.intervals[s].0, target.intervals[e - 1].1)
            };
            TargetSpan { words, time }
        })
        .collect();
    let pair = EditPair {
        id: entry.id.clone(),
        task: entry.task,
        original,
        target,
        target_spans,
        provenance: Provenance {
            src_utt: entry.src_utt.clone(),
            seed: entry.seed,
        },
    };
    pair.check_invariants()?;
    Ok(pair)
}

/// Writes a single line-delimited JSON file.
pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for r in rows {
        writeln!(f, "{}", serde_json::to_string(r)?).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic_corpus, SyntheticConfig};

    #[test]
    fn mix_must_sum_to_one() {
        let mut m = equal_mix();
        assert!(validate_mix(&m).is_ok());
        m.insert(EditTask::Insert, 0.5);
        assert!(matches!(validate_mix(&m), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn task_draw_respects_zero_weights() {
        let mix: TaskMix = [(EditTask::Delete, 1.0), (EditTask::Insert, 0.0)].into();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            assert_eq!(draw_task(&mix, &mut rng), EditTask::Delete);
        }
    }

    #[test]
    fn empty_corpus_is_error() {
        let dir = tempfile::tempdir().unwrap();
        let r = build_manifest(&[], &equal_mix(), &SpanSamplerConfig::default(), 0, dir.path());
        assert!(matches!(r, Err(Error::EmptyInput(_))));
    }

    #[test]
    fn round_trip_through_sidecars() {
        let cfg = SyntheticConfig {
            n_utts: 6,
            ..Default::default()
        };
        let corpus = generate_synthetic_corpus(&cfg, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let summary = build_manifest(&corpus, &equal_mix(), &SpanSamplerConfig::default(), 2, dir.path()).unwrap();
        let entries = read_manifest(&summary.manifest).unwrap();
        assert_eq!(entries.len(), summary.n_pairs);
        for e in &entries {
            let p = load_pair(dir.path(), e, cfg.sample_rate).unwrap();
            assert_eq!(p.original.text(), e.orig_text);
            assert_eq!(p.target.text(), e.tgt_text);
        }
    }
}
