use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("wav error on {path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },
    #[error("tensor error: {0}")]
    Tensor(#[from] candle_core::Error),

    // alignment validation
    #[error("alignment schema violation in {path}: {message}")]
    AlignmentSchema { path: PathBuf, message: String },
    #[error("word/interval count mismatch: {words} transcript words, {intervals} intervals")]
    IntervalCountMismatch { words: usize, intervals: usize },
    #[error("interval {index} overlaps or precedes its predecessor")]
    IntervalOverlap { index: usize },
    #[error("interval {index} is empty or inverted ({start}..{end})")]
    IntervalInverted { index: usize, start: f64, end: f64 },
    #[error("interval {index} ({start}..{end}) lies outside [0, {duration}]")]
    IntervalOutOfRange {
        index: usize,
        start: f64,
        end: f64,
        duration: f64,
    },
    #[error("word {index} of the alignment ({aligned:?}) does not match transcript word {transcript:?}")]
    WordMismatch {
        index: usize,
        aligned: String,
        transcript: String,
    },
    #[error("audio file referenced by alignment not found: {0}")]
    MissingAudio(PathBuf),
    #[error("unsupported audio format in {path}: {message}")]
    UnsupportedAudio { path: PathBuf, message: String },

    #[error("edit script does not match word sequence: {0}")]
    ScriptMismatch(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("clip of {samples} samples is shorter than one analysis window ({window})")]
    ClipTooShort { samples: usize, window: usize },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("sequence of length {len} exceeds limit {limit}: {what}")]
    SequenceTooLong {
        what: &'static str,
        len: usize,
        limit: usize,
    },
    #[error("id {id} outside vocabulary of size {vocab}")]
    VocabOutOfRange { id: u32, vocab: usize },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("score files disagree on utterance ids: {0}")]
    IdMismatch(String),
    #[error("output signal check failed: {0}")]
    SignalRange(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
