//! Speech editing with a token language model and guided flow matching.
//!
//! The crate covers supervised edit-pair construction from word-aligned
//! corpora, the acoustic front end, the token LM editing formulation, the
//! guided conditional flow-matching acoustic model, alignment-based
//! postprocessing and objective metrics.

pub mod audio;
pub mod corpus;
pub mod dataset;
pub mod error;
pub mod features;
pub mod flow;
pub mod lm;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod postprocess;
pub mod seed;
pub mod sequence;

pub use error::{Error, Result};
