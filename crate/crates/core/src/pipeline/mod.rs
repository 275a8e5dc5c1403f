//! Glue between the dataset, feature front end and the two models.

pub mod edit;
pub mod evaluate;
pub mod features;
pub mod train;
pub mod transcribe;

pub use edit::{run_edit, EditModels, EditOutput, EditRequest, InferenceConfig};
pub use evaluate::{hypothesis_regions, score_mels, AlignedMel, ScoreInput};
pub use features::{ClipFeatures, FeatureConfig, Featurizer, PairData};
pub use train::{fit_flow_config, fit_lm_config, flow_examples, lm_examples, tts_pairs};
pub use transcribe::{ToneTranscriber, Transcriber, Transcript};
