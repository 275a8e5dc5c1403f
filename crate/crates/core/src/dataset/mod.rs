//! Supervised edit pairs cut from word-aligned utterances.

pub mod manifest;
pub mod pairs;
pub mod sampler;

pub use manifest::{
    build_manifest, build_pair_for, equal_mix, load_pair, read_manifest, validate_mix, write_jsonl, write_pair,
    ManifestEntry, ManifestSummary, TaskMix,
};
pub use pairs::{
    build_deletion_pair, build_insertion_pair, build_multiedit_pair, build_substitution_pair, remove_words,
    split_points, EditPair, EditTask, Provenance, TargetSpan,
};
pub use sampler::{sample_spans, SpanSamplerConfig};
