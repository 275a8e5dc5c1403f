//! Acoustic front end and the stand-ins for pretrained components: log-mel
//! extraction, a k-means semantic tokenizer, a mel-mean speaker embedder and
//! a character-level text tokenizer.

pub mod codebook;
pub mod mel;
pub mod speaker;
pub mod text;

pub use codebook::{fit_codebook, tokenize_speech, Codebook, CodebookConfig, SemanticTokenSeq};
pub use mel::{mel, MelConfig, MelExtractor, MelSpectrogram};
pub use speaker::{speaker_embed, MelMeanEmbedder, SpeakerEmbedder, SpeakerEmbedding};
pub use text::{decode_text, encode_text, normalize_text, TextTokenSeq, TEXT_VOCAB_SIZE};
