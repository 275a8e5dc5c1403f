//! Audio + alignment I/O, transcript diffing, and span/time mapping.

pub mod alignment;
pub mod diff;
pub mod spans;
pub mod splice;
pub mod synthetic;

pub use alignment::{load_alignment, load_corpus_dir, AlignedUtterance, AlignmentFile};
pub use diff::{compute_edit_script, EditOp, EditScript};
pub use spans::{script_to_spans, EditSpan, EditSpanList};
pub use splice::extract_and_concat;
pub use synthetic::{generate_synthetic_corpus, SyntheticConfig};
