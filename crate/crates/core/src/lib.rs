//! Multimodal sign-language translation pipeline.
//!
//! The crate covers the whole experiment loop on desk-scale data:
//!
//! * [`corpus`]: record model, on-disk manifest format, seeded splits,
//!   vocabularies and a synthetic corpus generator with controlled homonyms.
//! * [`bodyparts`]: mouth / hand crops from annotated coordinates and
//!   multiplicative stream fusion.
//! * [`augment`]: horizontal flips and contrast-adjusted duplicates.
//! * [`align`]: gloss matching (word sets, BLEU), placeholder substitution and
//!   homonym statistics.
//! * [`metrics`]: BLEU-n, ROUGE-L, chrF and perplexity.
//! * [`nn`]: a small reverse-mode autodiff core and a transformer trained
//!   jointly on CTC recognition and translation cross-entropy.

pub mod align;
pub mod augment;
pub mod bodyparts;
pub mod corpus;
mod error;
pub mod metrics;
pub mod nn;
pub mod rng;

pub use error::{Error, Result};
