//! End-to-end acceptance checks, one line per criterion.
//!
//! Run a subset with `cargo test --release -p speechedit-cli --test acceptance -- 1 8`.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use anyhow::{ensure, Context, Result};
use candle_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use speechedit::corpus::{compute_edit_script, generate_synthetic_corpus, AlignedUtterance, SyntheticConfig};
use speechedit::dataset::{
    build_deletion_pair, build_insertion_pair, build_manifest, build_pair_for, equal_mix, load_pair, read_manifest,
    sample_spans, EditPair, EditTask, SpanSamplerConfig,
};
use speechedit::features::{
    encode_text, fit_codebook, tokenize_speech, CodebookConfig, MelConfig, MelExtractor, MelSpectrogram,
    SemanticTokenSeq, SpeakerEmbedding,
};
use speechedit::flow::{
    cfm_loss, ot_path, ot_target_field, sample, sample_full, train_flow, FlowBatch, FlowCondition, FlowConfig,
    FlowNet, FlowTrainConfig, VectorField,
};
use speechedit::lm::{decode, lm_loss, masked_accuracy, train_lm, DecodeStrategy, EditorLm, LMConfig, LmInput, LmTrainConfig};
use speechedit::metrics::{dct_basis, mcd_dtw, region_mcd, wer, MCD_K};
use speechedit::nn::{device, gradient_check};
use speechedit::pipeline::{fit_flow_config, fit_lm_config, flow_examples, lm_examples, FeatureConfig, Featurizer};
use speechedit::postprocess::{map_unedited_regions, replace_unedited, trim_fades};
use speechedit::sequence::{build_training_sequence, PairFeatures, PromptMode, VocabLayout};

type Check = fn() -> Result<String>;

const CRITERIA: [(&str, Check); 10] = [
    ("edit-script optimality and replay", diff_oracle),
    ("insertion/deletion duality", duality),
    ("tokenizer fidelity on tones", tokenizer_fidelity),
    ("LM loss and gradient sanity", lm_sanity),
    ("LM overfit", lm_overfit),
    ("flow path identities and gradient", flow_identities),
    ("flow overfit", flow_overfit),
    ("postprocess and metrics", postprocess_metrics),
    ("CLI determinism", determinism),
    ("ablation harness", ablation_harness),
];

fn main() {
    let wanted: BTreeSet<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for (i, (name, check)) in CRITERIA.iter().enumerate() {
        let n = i + 1;
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let t0 = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| Err(anyhow::anyhow!("panicked: {}", panic_text(&p))));
        let secs = t0.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {n:>2} PASS  {name}: {detail} [{secs:.1}s]"),
            Err(e) => {
                println!("criterion {n:>2} FAIL  {name}: {e:#} [{secs:.1}s]");
                failed.push(n);
            }
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}

fn panic_text(p: &Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<String>()
        .cloned()
        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_default()
}

fn words(rng: &mut ChaCha8Rng, max_len: usize, vocab: usize) -> Vec<String> {
    let n = rng.random_range(0..=max_len);
    (0..n).map(|_| format!("w{}", rng.random_range(0..vocab))).collect()
}

/// First `n` pairs the manifest sampler produces over a fresh corpus.
fn synthetic_pairs(n_utts: usize, n: usize) -> Result<Vec<EditPair>> {
    let corpus = generate_synthetic_corpus(&SyntheticConfig { n_utts, ..Default::default() }, 0)?;
    let mut pairs = Vec::new();
    for (i, u) in corpus.iter().enumerate() {
        if let (_, Ok(p)) = build_pair_for(u, &equal_mix(), &SpanSamplerConfig::default(), i as u64) {
            pairs.push(p);
        }
        if pairs.len() == n {
            break;
        }
    }
    ensure!(pairs.len() == n, "only {} pairs from {n_utts} utterances", pairs.len());
    Ok(pairs)
}

// 1

/// Minimum over every monotone alignment, enumerated without memoisation.
fn brute_force_cost(a: &[String], b: &[String]) -> usize {
    match (a.split_first(), b.split_first()) {
        (None, _) => b.len(),
        (_, None) => a.len(),
        (Some((x, ra)), Some((y, rb))) => {
            let diag = brute_force_cost(ra, rb) + usize::from(x != y);
            diag.min(1 + brute_force_cost(ra, b)).min(1 + brute_force_cost(a, rb))
        }
    }
}

fn diff_oracle() -> Result<String> {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for k in 0..500 {
        let (a, b) = (words(&mut rng, 6, 4), words(&mut rng, 6, 4));
        let s = compute_edit_script(&a, &b);
        s.validate(a.len(), b.len())?;
        ensure!(s.cost() == brute_force_cost(&a, &b), "instance {k}: cost {} for {a:?} -> {b:?}", s.cost());
        ensure!(s.replay(&a)? == b, "instance {k}: replay differs");
    }

    let corpus = generate_synthetic_corpus(&SyntheticConfig { n_utts: 200, ..Default::default() }, 5)?;
    let dir = tempfile::tempdir()?;
    let summary = build_manifest(&corpus, &equal_mix(), &SpanSamplerConfig::default(), 5, dir.path())?;
    let entries = read_manifest(&summary.manifest)?;
    let sr = corpus[0].audio.sample_rate;
    for e in &entries {
        let p = load_pair(dir.path(), e, sr)?;
        p.check_invariants()?;
        ensure!(p.script().replay(p.original_text())? == p.target_text(), "{}: replay differs", p.id);
    }
    let elapsed = t0.elapsed();
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    Ok(format!("500/500 optimal, {}/{} pairs replay", entries.len(), entries.len()))
}

// 2

fn same_side(a: &AlignedUtterance, b: &AlignedUtterance) -> bool {
    a.audio.samples == b.audio.samples && a.words == b.words && a.intervals == b.intervals
}

fn duality() -> Result<String> {
    let cfg = SyntheticConfig::default();
    let sampler = SpanSamplerConfig::default();
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(6..=12);
        let ids: Vec<usize> = (0..n).map(|_| rng.random_range(0..cfg.vocab_hz.len())).collect();
        let u = cfg.render(&format!("u{seed}"), &ids)?;
        let spans = sample_spans(&u, rng.random_range(1..=2), &sampler, seed)?;
        let ins = build_insertion_pair(&u, &spans, seed)?;
        let del = build_deletion_pair(&u, &spans, seed)?;
        ensure!(del.task == EditTask::Delete, "seed {seed}: task {:?}", del.task);
        ensure!(same_side(&del.original, &ins.target), "seed {seed}: deletion original differs");
        ensure!(same_side(&del.target, &ins.original), "seed {seed}: deletion target differs");
    }
    Ok("100/100 seeds sample-exact".into())
}

// 3

fn tokenizer_fidelity() -> Result<String> {
    let syn = SyntheticConfig { n_utts: 40, ..Default::default() };
    let corpus = generate_synthetic_corpus(&syn, 2)?;
    let mel_cfg = MelConfig::default();
    let ex = MelExtractor::new(mel_cfg.clone())?;
    let cb_cfg = CodebookConfig::default();
    ensure!(cb_cfg.size >= syn.vocab_hz.len(), "codebook smaller than the vocabulary");
    let r = cb_cfg.downsample;
    let mels = corpus.iter().map(|u| ex.compute(&u.audio)).collect::<Result<Vec<_>, _>>()?;
    let cb = fit_codebook(&mels, &cb_cfg, 0)?;

    let sr = mel_cfg.sample_rate as f64;
    let mut per_word: BTreeMap<String, BTreeMap<u32, usize>> = BTreeMap::new();
    for (u, m) in corpus.iter().zip(&mels) {
        let tokens = tokenize_speech(&m.pad_to_multiple(r), &cb, r)?;
        for (i, &id) in tokens.ids.iter().enumerate() {
            let last = ((i + 1) * r - 1).min(m.n_frames.saturating_sub(1));
            let start = mel_cfg.frame_start(i * r) as f64 / sr;
            let end = (mel_cfg.frame_start(last) + mel_cfg.win_length) as f64 / sr;
            // Tokens whose analysis windows straddle a word boundary belong to neither word.
            if let Some(w) = u.intervals.iter().position(|&(a, b)| a <= start + 1e-9 && end <= b + 1e-9) {
                *per_word.entry(u.words[w].clone()).or_default().entry(id).or_default() += 1;
            }
        }
    }
    ensure!(per_word.len() == syn.vocab_hz.len(), "only {} words observed", per_word.len());
    let mut modes = BTreeSet::new();
    let mut worst = 1.0f64;
    for (w, counts) in &per_word {
        let total: usize = counts.values().sum();
        let (&mode, &hits) = counts.iter().max_by_key(|(_, &c)| c).unwrap();
        let frac = hits as f64 / total as f64;
        ensure!(frac >= 0.99, "{w}: modal token covers {:.2}% of {total}", 100.0 * frac);
        ensure!(modes.insert(mode), "{w} shares token {mode} with another word");
        worst = worst.min(frac);
    }
    Ok(format!("{} words, worst fidelity {:.2}%, distinct ids", per_word.len(), 100.0 * worst))
}

// 4

fn lm_sanity() -> Result<String> {
    let pairs = synthetic_pairs(30, 8)?;
    let fz = Featurizer::fit(&FeatureConfig::default(), &pairs, 0)?;
    let data = fz.pairs(&pairs)?;
    let base = LMConfig { width: 32, layers: 2, heads: 4, ff_width: 64, ..Default::default() };
    let cfg = fit_lm_config(&base, &fz);
    let model = EditorLm::new(cfg.clone())?;
    let exs = lm_examples(&data, &[PromptMode::ZeroShot], &cfg.layout)?;
    let refs: Vec<_> = exs.iter().collect();
    let inputs: Vec<LmInput> = exs.iter().map(LmInput::from).collect();
    let logp = model.forward(&inputs)?;
    let loss = lm_loss(&logp, &refs)?.to_scalar::<f64>()?;
    let ln_v = (cfg.vocab_size() as f64).ln();
    let rel = (loss - ln_v).abs() / ln_v;
    ensure!(rel < 0.02, "initial loss {loss} vs ln V {ln_v}");

    let (b, t, v) = logp.dims3()?;
    let mut oracle = vec![-(v as f64).ln(); b * t * v];
    for (r, e) in exs.iter().enumerate() {
        for p in (1..e.ids.len()).filter(|&p| e.loss_mask[p]) {
            let row = &mut oracle[(r * t + p - 1) * v..(r * t + p) * v];
            row.fill(-700.0);
            row[e.ids[p] as usize] = 0.0;
        }
    }
    let oracle = Tensor::from_vec(oracle, (b, t, v), &device())?;
    let zero = lm_loss(&oracle, &refs)?.to_scalar::<f64>()?;
    ensure!(zero.abs() < 1e-12, "oracle loss {zero}");

    let layout = VocabLayout::new(8);
    let small = LMConfig {
        width: 16,
        layers: 1,
        heads: 2,
        ff_width: 32,
        max_len: 48,
        turn_position: 24,
        speaker_dim: 6,
        layout: layout.clone(),
        zero_head: false,
        seed: 4,
        ..Default::default()
    };
    let lm = EditorLm::new(small)?;
    let n_params = lm.params.n_params();
    ensure!(n_params <= 10_000, "{n_params} parameters");
    let tiny_exs = [("ab c", vec![1, 2, 3, 4], vec![1, 5, 3]), ("a", vec![7, 0, 6], vec![7, 7])]
        .iter()
        .enumerate()
        .map(|(k, (text, orig, tgt))| {
            let speaker = SpeakerEmbedding::from_raw((0..6).map(|i| ((i + k) as f64).sin()).collect())?;
            build_training_sequence(
                &PairFeatures {
                    speaker,
                    target_text: encode_text(text),
                    orig_tokens: SemanticTokenSeq::new(orig.clone(), 25.0),
                    tgt_tokens: SemanticTokenSeq::new(tgt.clone(), 25.0),
                },
                &layout,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    let tiny_refs: Vec<_> = tiny_exs.iter().collect();
    let tiny_inputs: Vec<LmInput> = tiny_exs.iter().map(LmInput::from).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let report = gradient_check(
        &lm.params,
        || lm_loss(&lm.forward(&tiny_inputs)?, &tiny_refs),
        0.2,
        1e-6,
        &mut rng,
    )?;
    ensure!(report.max_rel_err < 1e-3, "gradient check {report:?}");
    Ok(format!(
        "init loss {loss:.4} vs ln V {ln_v:.4} ({:.2}%), oracle loss {zero:.1e}, grad rel err {:.1e} over {} entries of {n_params} params",
        100.0 * rel,
        report.max_rel_err,
        report.checked
    ))
}

// 5

fn lm_overfit() -> Result<String> {
    let pairs = synthetic_pairs(40, 20)?;
    let fz = Featurizer::fit(&FeatureConfig::default(), &pairs, 0)?;
    let data = fz.pairs(&pairs)?;
    let cfg = fit_lm_config(&LMConfig { width: 64, layers: 3, heads: 4, ff_width: 256, ..Default::default() }, &fz);
    let layout = cfg.layout.clone();
    let model = EditorLm::new(cfg)?;
    let exs = lm_examples(&data, &[PromptMode::ZeroShot, PromptMode::OneShot], &layout)?;
    let tc = LmTrainConfig { lr: 3e-3, warmup: 20, epochs: 150, batch: 20, ..Default::default() };
    train_lm(&model, &exs, &tc, 0, None, |_, _| Ok(()))?;

    let (mut hit, mut total) = (0, 0);
    for chunk in exs.chunks(10) {
        let refs: Vec<_> = chunk.iter().collect();
        let inputs: Vec<LmInput> = chunk.iter().map(LmInput::from).collect();
        let (h, t) = masked_accuracy(&model.forward(&inputs)?, &refs)?;
        hit += h;
        total += t;
    }
    let acc = hit as f64 / total as f64;

    let mut exact = 0;
    let (mut pos_hit, mut pos_total) = (0, 0);
    for (p, d) in pairs.iter().zip(&data) {
        let gt = &d.tgt.tokens;
        let budget = gt.len() + 20;
        let one = decode(&d.prompt(PromptMode::OneShot, &layout)?, &model, DecodeStrategy::Greedy, budget, 0)?;
        exact += usize::from(one.tokens == gt.ids);

        let zero = decode(&d.prompt(PromptMode::ZeroShot, &layout)?, &model, DecodeStrategy::Greedy, budget, 0)?;
        let regions = map_unedited_regions(&p.original, &p.target, &p.script())?;
        for i in 0..gt.len() {
            let (a, b) = (i as f64 / gt.token_rate_hz, (i + 1) as f64 / gt.token_rate_hz);
            if regions.iter().any(|r| r.tgt.0 <= a + 1e-9 && b <= r.tgt.1 + 1e-9) {
                pos_total += 1;
                pos_hit += usize::from(zero.tokens.get(i) == Some(&gt.ids[i]));
            }
        }
    }
    let pos = pos_hit as f64 / pos_total.max(1) as f64;
    let detail = format!(
        "accuracy {:.2}%, one-shot exact {exact}/20, zero-shot unedited positional {:.2}% ({pos_hit}/{pos_total})",
        100.0 * acc,
        100.0 * pos
    );
    ensure!(acc >= 0.95 && exact >= 18 && pos >= 0.90, "{detail}");
    Ok(detail)
}

// 6

struct Oracle(Tensor);

impl VectorField for Oracle {
    fn field(&self, _: &Tensor, _: f64, _: &FlowCondition) -> speechedit::Result<Tensor> {
        Ok(self.0.clone())
    }
}

fn max_abs(a: &Tensor, b: &Tensor) -> Result<f64> {
    Ok((a - b)?.abs()?.flatten_all()?.max(0)?.to_scalar::<f64>()?)
}

fn flow_identities() -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let rand_tensor = |rng: &mut ChaCha8Rng| {
        let v: Vec<f64> = (0..7 * 5).map(|_| rng.random_range(-3.0..3.0)).collect();
        Tensor::from_vec(v, (7, 5), &device())
    };
    let (z0, z1) = (rand_tensor(&mut rng)?, rand_tensor(&mut rng)?);
    let mut endpoint = 0.0f64;
    let mut deriv = 0.0f64;
    for sigma in [0.0, 1e-4, 0.05] {
        endpoint = endpoint.max(max_abs(&ot_path(&z0, &z1, 0.0, sigma)?, &z0)?);
        let omega = ot_target_field(&z0, &z1, sigma)?;
        for t in [0.1, 0.5, 0.9] {
            let h = 1e-5;
            let fd = ((ot_path(&z0, &z1, t + h, sigma)? - ot_path(&z0, &z1, t - h, sigma)?)? / (2.0 * h))?;
            deriv = deriv.max(max_abs(&fd, &omega)?);
        }
    }
    endpoint = endpoint.max(max_abs(&ot_path(&z0, &z1, 1.0, 0.0)?, &z1)?);
    ensure!(endpoint <= 1e-7, "endpoint error {endpoint}");
    ensure!(deriv <= 1e-6, "derivative error {deriv}");

    let pairs = synthetic_pairs(10, 2)?;
    let fz = Featurizer::fit(&FeatureConfig::default(), &pairs, 0)?;
    let exs = flow_examples(&fz.pairs(&pairs)?, &fz)?;
    let mut oracle_loss = 0.0f64;
    for ex in &exs {
        let b = FlowBatch::draw(ex, &mut rng)?;
        let field = Oracle(ot_target_field(&b.z0, &b.z1, 1e-4)?);
        oracle_loss = oracle_loss.max(cfm_loss(&field, &[b], 1e-4)?.to_scalar::<f64>()?);
    }
    ensure!(oracle_loss.abs() < 1e-12, "oracle loss {oracle_loss}");

    let base = FlowConfig { width: 8, blocks: 1, token_dim: 4, time_dim: 4, seed: 2, ..Default::default() };
    let net = FlowNet::new(fit_flow_config(&base, &fz, &exs)?)?;
    let batch: Vec<FlowBatch> = exs.iter().map(|e| FlowBatch::draw(e, &mut rng)).collect::<Result<_, _>>()?;
    // The L1 objective with residual signs frozen at the current parameters:
    // same value and gradient here, but no kink for a finite difference to cross.
    let sigma = net.config.sigma_min;
    let residual = |b: &FlowBatch| -> speechedit::Result<Tensor> {
        let phi = ot_path(&b.z0, &b.z1, b.t, sigma)?;
        Ok((ot_target_field(&b.z0, &b.z1, sigma)? - net.field(&phi, b.t, b.cond)?)?)
    };
    let signs: Vec<Tensor> = batch.iter().map(|b| Ok(residual(b)?.sign()?.detach())).collect::<Result<_>>()?;
    let linearised = || -> speechedit::Result<Tensor> {
        let mut total = Tensor::zeros((), speechedit::nn::DTYPE, &device())?;
        for (b, s) in batch.iter().zip(&signs) {
            total = (total + (residual(b)? * s)?.mean_all()?)?;
        }
        Ok((total / batch.len() as f64)?)
    };
    let l1 = cfm_loss(&net, &batch, sigma)?.to_scalar::<f64>()?;
    let lin = linearised()?.to_scalar::<f64>()?;
    ensure!((l1 - lin).abs() < 1e-12, "linearised loss {lin} vs {l1}");
    let report = gradient_check(&net.params, linearised, 0.05, 1e-5, &mut rng)?;
    ensure!(report.max_rel_err < 1e-3, "gradient check {report:?}");
    Ok(format!(
        "endpoint err {endpoint:.1e}, d/dt err {deriv:.1e}, oracle loss {oracle_loss:.1e}, grad rel err {:.1e} over {} entries",
        report.max_rel_err, report.checked
    ))
}

// 7

fn flow_overfit() -> Result<String> {
    let pairs = synthetic_pairs(30, 10)?;
    let fz = Featurizer::fit(&FeatureConfig::default(), &pairs, 0)?;
    let data = fz.pairs(&pairs)?;
    let exs = flow_examples(&data, &fz)?;
    let cfg = fit_flow_config(&FlowConfig { width: 64, blocks: 4, ..Default::default() }, &fz, &exs)?;
    let net = FlowNet::new(cfg)?;
    let tc = FlowTrainConfig { lr: 2e-3, epochs: 2000, batch: 10, warmup: 20, ..Default::default() };
    train_flow(&net, &exs, &tc, 0, None, |_, _| Ok(()))?;

    let r = fz.downsample();
    let fill = fz.extractor.config().log_floor();
    let (mut total, mut worst) = (0.0, 0.0f64);
    for (k, d) in data.iter().enumerate() {
        let cond = d.flow_condition(&d.tgt.tokens, r, fill)?;
        let y = sample(&net, &cond, net.config.ode_steps, k as u64)?;
        ensure!(cond.boundary == r * d.orig.tokens.len(), "{}: boundary {}", d.id, cond.boundary);
        ensure!(y.n_frames == r * d.tgt.tokens.len(), "{}: {} frames for {} tokens", d.id, y.n_frames, d.tgt.tokens.len());
        let full = sample_full(&net, &cond, net.config.ode_steps, k as u64)?;
        ensure!(full.slice(cond.boundary, full.n_frames) == y, "{}: target region is not the tail", d.id);
        let mae = y.mean_abs_diff(&d.tgt.mel)?;
        total += mae;
        worst = worst.max(mae);
    }
    let mean = total / data.len() as f64;
    let detail = format!("mean MAE {mean:.3}, worst {worst:.3}, frame contract 10/10");
    ensure!(mean <= 0.5, "{detail}");
    Ok(detail)
}

// 8

fn dp_word_errors(r: &[String], h: &[String]) -> usize {
    let mut prev: Vec<usize> = (0..=h.len()).collect();
    for (i, x) in r.iter().enumerate() {
        let mut cur = vec![i + 1; h.len() + 1];
        for (j, y) in h.iter().enumerate() {
            cur[j + 1] = (prev[j] + usize::from(x != y)).min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        prev = cur;
    }
    prev[h.len()]
}

fn postprocess_metrics() -> Result<String> {
    let fade_ms = 20.0;
    let pairs = synthetic_pairs(40, 20)?;
    let ex = MelExtractor::new(MelConfig::default())?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut worst, mut before_min, mut checked) = (0.0f64, f64::INFINITY, 0);
    for p in &pairs {
        let tgt = p.target_speech();
        let hyp_samples: Vec<f32> = tgt.samples.iter().map(|&s| 0.6 * s + rng.random_range(-0.05..0.05)).collect();
        let hyp = speechedit::audio::AudioClip::new(hyp_samples, tgt.sample_rate)?;
        let regions = map_unedited_regions(&p.original, &p.target, &p.script())?;
        let replaced = replace_unedited(&hyp, p.original_speech(), &regions, fade_ms)?;
        let trimmed = trim_fades(&regions, fade_ms, tgt.duration_s());
        if trimmed.is_empty() {
            continue;
        }
        before_min = before_min.min(region_mcd(p.original_speech(), &hyp, &trimmed, &ex)?);
        worst = worst.max(region_mcd(p.original_speech(), &replaced.clip, &trimmed, &ex)?);
        checked += 1;
    }
    ensure!(checked >= 15, "only {checked} pairs had regions outside the fades");
    ensure!(worst < 1e-3, "region MCD after replacement {worst}");
    ensure!(before_min > 1.0, "unreplaced hypothesis already matched ({before_min})");

    let x = ex.compute(pairs[0].original_speech())?;
    let self_mcd = mcd_dtw(&x, &x)?;
    ensure!(self_mcd == 0.0, "mcd(x, x) = {self_mcd}");
    let mut dup = Vec::new();
    for (t, f) in x.frames().enumerate() {
        dup.extend_from_slice(f);
        if t % 3 == 0 {
            dup.extend_from_slice(f);
        }
    }
    let dup = MelSpectrogram::from_data(dup, x.n_bins, x.frame_rate_hz, x.config_id.clone())?;
    let dup_mcd = mcd_dtw(&x, &dup)?;
    ensure!(dup_mcd == 0.0, "duplicated frames give {dup_mcd}");

    let basis = dct_basis(x.n_bins, 14);
    let mut closed = 0.0f64;
    for k in 1..=13 {
        let frame: Vec<f64> = (0..x.n_bins).map(|_| rng.random_range(-8.0..0.0)).collect();
        let delta = rng.random_range(-2.0..2.0);
        let shifted: Vec<f64> = frame.iter().zip(&basis[k]).map(|(f, b)| f + delta * b).collect();
        let one = |v: Vec<f64>| MelSpectrogram::from_data(v, x.n_bins, x.frame_rate_hz, x.config_id.clone());
        let d = mcd_dtw(&one(frame)?, &one(shifted)?)?;
        closed = closed.max((d - MCD_K * f64::abs(delta)).abs());
    }
    ensure!(closed <= 1e-9, "single-frame closed form off by {closed}");

    for k in 0..200 {
        let r = loop {
            let r = words(&mut rng, 10, 5);
            if !r.is_empty() {
                break r;
            }
        };
        let h = words(&mut rng, 10, 5);
        let expected = 100.0 * dp_word_errors(&r, &h) as f64 / r.len() as f64;
        let got = wer(&r.join(" "), &h.join(" "));
        ensure!(got == expected, "pair {k}: wer {got} vs {expected}");
    }
    Ok(format!(
        "replaced region MCD max {worst:.1e} on {checked} pairs (unreplaced min {before_min:.2}), DTW cases exact, closed form within {closed:.1e}, WER 200/200"
    ))
}

// 9, 10

const TINY: &str = r#"
seed = 11

[synthetic]
n_utts = 8

[lm]
width = 16
layers = 1
heads = 2
ff_width = 32

[lm_train]
epochs = 1
batch = 4

[flow]
width = 16
blocks = 1
token_dim = 8
time_dim = 8
ode_steps = 2

[flow_train]
epochs = 1
batch = 4

[base]
lm_epochs = 1
flow_epochs = 1
"#;

fn cli(dir: &Path, args: &[&str], threads: usize) -> Result<()> {
    let out = Command::new(env!("CARGO_BIN_EXE_speechedit"))
        .current_dir(dir)
        .env("RAYON_NUM_THREADS", threads.to_string())
        .args(["--config", "tiny.toml"])
        .args(args)
        .output()?;
    ensure!(
        out.status.success(),
        "speechedit {args:?} exited {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    Ok(())
}

/// SHA-256 of every file under `dir` by relative path.
fn tree_hashes(dir: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d)? {
            let p = e?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir)?.to_string_lossy().into_owned();
                out.insert(rel, hex::encode(Sha256::digest(std::fs::read(&p)?)));
            }
        }
    }
    Ok(out)
}

fn run_pipeline(dir: &Path, threads: usize) -> Result<BTreeMap<String, String>> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("tiny.toml"), TINY)?;
    cli(dir, &["synth"], threads)?;
    cli(dir, &["build-dataset"], threads)?;
    cli(dir, &["train", "--stage", "base"], threads)?;
    cli(dir, &["train"], threads)?;
    cli(dir, &["edit", "--pairs", "dataset/manifest.jsonl", "--dump-tokens"], threads)?;
    cli(dir, &["evaluate", "--pairs", "output/edit/eval_pairs.jsonl"], threads)?;
    tree_hashes(dir)
}

fn determinism() -> Result<String> {
    let root = tempfile::tempdir()?;
    let work = root.path().join("run");
    let first = run_pipeline(&work, 1)?;
    std::fs::rename(&work, root.path().join("first"))?;
    let second = run_pipeline(&work, 4)?;
    ensure!(first.len() == second.len(), "{} vs {} files", first.len(), second.len());
    for (path, hash) in &first {
        ensure!(second.get(path) == Some(hash), "{path} differs between runs");
    }
    for out in ["dataset", "checkpoints", "output/edit", "output/eval"] {
        let snap = std::fs::read_to_string(work.join(out).join("config.toml")).with_context(|| format!("{out} snapshot"))?;
        ensure!(snap.contains("seed = 11"), "{out} snapshot lacks the seed");
    }
    Ok(format!("{} files hash-identical across reruns", first.len()))
}

fn ablation_harness() -> Result<String> {
    let dir = tempfile::tempdir()?;
    std::fs::write(dir.path().join("tiny.toml"), TINY)?;
    cli(dir.path(), &["synth"], 1)?;
    cli(dir.path(), &["build-dataset"], 1)?;
    cli(dir.path(), &["ablate", "--out", "ablation"], 1)?;
    let table = std::fs::read_to_string(dir.path().join("ablation/ablation.md"))?;
    let lines: Vec<&str> = table.lines().collect();
    let cells = |l: &str| l.trim_matches('|').split('|').map(|c| c.trim().to_string()).collect::<Vec<_>>();
    let header = cells(lines.first().context("empty table")?);
    let expected = ["Method", "WER (%)", "SpkSIM", "MCD", "MOSNet", "MAE_MOSNet", "UTMOS", "MAE_UTMOS"];
    ensure!(header == expected, "header {header:?}");
    ensure!(lines.len() == 6, "{} table lines", lines.len());

    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("ablation/ablation.json"))?)?;
    let rows = json["rows"].as_array().context("rows")?;
    let got: Vec<(String, String, String)> = rows
        .iter()
        .map(|r| (r["lm"].to_string(), r["flow"].to_string(), r["mode"].to_string()))
        .collect();
    let want: Vec<(String, String, String)> = [
        ("base", "base", "one_shot"),
        ("edit", "base", "one_shot"),
        ("edit", "edit", "zero_shot"),
        ("edit", "edit", "one_shot"),
    ]
    .iter()
    .map(|(a, b, c)| (format!("\"{a}\""), format!("\"{b}\""), format!("\"{c}\"")))
    .collect();
    ensure!(got == want, "configurations {got:?}");
    for (row, line) in rows.iter().zip(&lines[2..]) {
        let c = cells(line);
        ensure!(c[0] == row["method"].as_str().unwrap_or_default(), "row order differs");
        ensure!(c[1].parse::<f64>().is_ok(), "WER cell {:?}", c[1]);
    }
    Ok("4 configurations, column schema matches".into())
}
