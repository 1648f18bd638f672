//! charlens: dual-tokenization analysis on small, fully deterministic
//! transformers.
//!
//! The crate tokenizes the same text two ways (byte-level BPE and one token
//! per character), aligns the two into per-token character spans, runs a
//! hookable decoder-only model over the character sequence, and measures
//! how far canonical token identities are decodable from hidden states —
//! then probes that machinery causally, by deleting token directions from
//! the residual stream and by masking attention among characters of the
//! same canonical token.
//!
//! Batch-level work (examples, layers, sweep points) is data-parallel via
//! rayon under the default `parallel` feature; disabling default features
//! gives a sequential build with identical results.

pub mod error;
pub mod export;
pub mod harness;
pub mod intervene;
pub mod linalg;
pub mod mask;
pub mod model;
mod par;
pub mod recovery;
pub mod synth;
pub mod tokenize;

pub use error::{Error, Result};
