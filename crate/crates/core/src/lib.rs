//! Deterministic building blocks for context-dependent text-to-SQL with
//! question rewriting: rewrite edit matrices and their inversion, ROUGE
//! scoring, schema linking, a relation-aware transformer encoder, and the
//! file formats tying them together.

#![allow(clippy::needless_range_loop)]

pub mod dataset_io;
pub mod rat_encoder;
pub mod rewrite_diff;
pub mod rewrite_restore;
pub mod rouge_eval;
pub mod schema_link;
pub mod synthetic;
