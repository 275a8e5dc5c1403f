use proptest::prelude::*;
use speechedit::corpus::{compute_edit_script, generate_synthetic_corpus, SyntheticConfig};
use speechedit::dataset::*;

/// Power at `f` via a direct DFT sum, normalised by length.
fn tone_power(x: &[f32], f: f64, sr: f64) -> f64 {
    let (mut re, mut im) = (0.0, 0.0);
    for (n, &v) in x.iter().enumerate() {
        let ph = 2.0 * std::f64::consts::PI * f * n as f64 / sr;
        re += v as f64 * ph.cos();
        im -= v as f64 * ph.sin();
    }
    (re * re + im * im) / (x.len() as f64).powi(2)
}

fn dominant_tone(x: &[f32], cfg: &SyntheticConfig) -> usize {
    let sr = cfg.sample_rate as f64;
    (0..cfg.vocab_hz.len())
        .max_by(|&a, &b| {
            tone_power(x, cfg.vocab_hz[a], sr)
                .partial_cmp(&tone_power(x, cfg.vocab_hz[b], sr))
                .unwrap()
        })
        .unwrap()
}

#[test]
fn insertion_original_contains_only_kept_tones() {
    let cfg = SyntheticConfig::default();
    let u = cfg.render("u", &[0, 1, 2, 3, 4, 5, 6, 7]).unwrap();
    let p = build_insertion_pair(&u, &[2..4, 5..6], 11).unwrap();
    let n = cfg.word_samples();
    assert_eq!(p.original_speech().len(), 5 * n);
    let found: Vec<usize> = p
        .original_speech()
        .samples
        .chunks(n)
        .map(|c| dominant_tone(c, &cfg))
        .collect();
    assert_eq!(found, [0, 1, 4, 6, 7]);
}

#[test]
fn manifest_is_reproducible_and_balanced() {
    let cfg = SyntheticConfig {
        n_utts: 100,
        ..Default::default()
    };
    let corpus = generate_synthetic_corpus(&cfg, 3).unwrap();
    let sampler = SpanSamplerConfig::default();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let sa = build_manifest(&corpus, &equal_mix(), &sampler, 42, a.path()).unwrap();
    let sb = build_manifest(&corpus, &equal_mix(), &sampler, 42, b.path()).unwrap();
    let ma = std::fs::read(&sa.manifest).unwrap();
    let mb = std::fs::read(&sb.manifest).unwrap();
    assert_eq!(ma, mb);
    assert_eq!(sa.n_pairs + sa.total_skipped(), 100);
    for t in EditTask::ALL {
        let drawn = sa.per_task[&t] + sa.skipped[&t];
        assert!((10..=40).contains(&drawn), "{t}: {drawn}");
    }
    let entries = read_manifest(&sa.manifest).unwrap();
    let mut ids: Vec<&str> = entries.iter().map(|e| e.src_utt.as_str()).collect();
    let sorted = {
        let mut s = ids.clone();
        s.sort();
        s
    };
    assert_eq!(ids, sorted);
    ids.dedup();
    assert_eq!(ids.len(), entries.len());
    for e in &entries {
        let p = load_pair(a.path(), e, cfg.sample_rate).unwrap();
        p.check_invariants().unwrap();
        let script = p.script();
        assert_eq!(script.replay(p.original_text()).unwrap(), p.target_text());
    }
}

fn corpus_utt(seed: u64, n: usize) -> speechedit::corpus::AlignedUtterance {
    let cfg = SyntheticConfig {
        n_utts: 1,
        words_per_utt: (n, n),
        ..Default::default()
    };
    generate_synthetic_corpus(&cfg, seed).unwrap().remove(0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn deletion_mirrors_insertion(seed in any::<u64>(), n in 4usize..12, k in 1usize..3) {
        let u = corpus_utt(seed, n);
        let spans = match sample_spans(&u, k, &SpanSamplerConfig::default(), seed) {
            Ok(s) => s,
            Err(_) => return Ok(()),
        };
        let ins = build_insertion_pair(&u, &spans, seed).unwrap();
        let del = build_deletion_pair(&u, &spans, seed).unwrap();
        prop_assert_eq!(&del.original.audio, &ins.target.audio);
        prop_assert_eq!(&del.target.audio, &ins.original.audio);
        prop_assert_eq!(&del.original.words, &ins.target.words);
        prop_assert_eq!(&del.target.words, &ins.original.words);
        prop_assert_eq!(&del.provenance, &ins.provenance);
        let inverted = ins.script().invert(ins.original_text());
        prop_assert_eq!(del.script(), inverted);
    }

    #[test]
    fn substitution_split_is_interior(seed in any::<u64>(), start in 1usize..4, len in 2usize..5) {
        let span = start..start + len;
        let splits = split_points(std::slice::from_ref(&span), seed);
        prop_assert!(splits[0] > span.start && splits[0] < span.end);
        let u = corpus_utt(seed, start + len + 2);
        match build_substitution_pair(&u, span.clone(), seed) {
            Ok(p) => {
                let k = splits[0];
                let mut tgt = u.words[..k].to_vec();
                tgt.extend_from_slice(&u.words[span.end..]);
                let mut orig = u.words[..span.start].to_vec();
                orig.extend_from_slice(&u.words[k..]);
                prop_assert_eq!(p.target_text(), &tgt[..]);
                prop_assert_eq!(p.original_text(), &orig[..]);
                let s = compute_edit_script(p.original_text(), p.target_text());
                prop_assert_eq!(s.edit_runs(), 1);
            }
            Err(speechedit::Error::Infeasible(_)) => {}
            Err(e) => prop_assert!(false, "{e}"),
        }
    }

    #[test]
    fn kept_words_untouched(seed in any::<u64>(), n in 5usize..12) {
        let u = corpus_utt(seed, n);
        let mix = equal_mix();
        let (_, pair) = build_pair_for(&u, &mix, &SpanSamplerConfig::default(), seed);
        let Ok(p) = pair else { return Ok(()) };
        let script = p.script();
        for op in &script.ops {
            if let speechedit::corpus::EditOp::Keep { orig, tgt } = *op {
                let (a, b) = p.original.intervals[orig];
                let (c, d) = p.target.intervals[tgt];
                prop_assert_eq!(
                    p.original.audio.slice_s(a, b).unwrap(),
                    p.target.audio.slice_s(c, d).unwrap()
                );
            }
        }
    }
}
