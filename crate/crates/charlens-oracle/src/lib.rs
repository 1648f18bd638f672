//! Brute-force reference implementations used only by tests.
//!
//! Everything here trades speed for obviousness: naive quadratic BPE,
//! a scalar-loop transformer forward, full-sort top-K decoding, explicit
//! set-based recovery, scalar projection, and an explicit masked softmax.
//! None of it shares computation code with the engine; only data types are
//! reused. Intended for sequences up to ~64 positions and models up to a
//! handful of layers.

// explicit index loops are the point of a scalar reference
#![allow(clippy::needless_range_loop)]

pub mod bpe;
pub mod forward;
pub mod project;
pub mod recovery;
pub mod softmax;

pub use bpe::naive_bpe;
pub use forward::{oracle_forward, OracleRun};
pub use project::project_out_scalar;
pub use recovery::{full_sort_topk, oracle_recovery};
pub use softmax::{oracle_masked_softmax, SoftmaxError};
