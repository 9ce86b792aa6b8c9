//! Method layer for disease-aware 3D CT vision–language models operating on
//! frozen encoder outputs.
//!
//! - [`numeric`]: projection heads, AdamW, learning-rate schedule
//! - [`objectives`]: pairwise-sigmoid contrastive, prompt, and localization losses
//! - [`mining`]: slice-reference mining from report text
//! - [`prompts`]: prompt banks and zero-shot finding classification
//! - [`eval`]: retrieval, AUC, localization metrics and bootstrap intervals
//! - [`corpus`]: precomputed embeddings, labels and snippets of a dataset
//! - [`synth`]: seeded synthetic corpora with planted structure
//! - [`train`]: desk-scale training loop and checkpoint evaluation
//! - [`io`]: embedding, checkpoint and JSON Lines formats

pub mod corpus;
pub mod error;
pub mod eval;
pub mod io;
pub mod mining;
pub mod numeric;
pub mod objectives;
pub mod prompts;
pub mod seed;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
