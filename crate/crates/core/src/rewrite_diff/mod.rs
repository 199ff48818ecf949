//! Bi-directional rewriting edit matrices.
//!
//! A rewrite of the current question is compared with the question itself
//! through an LCS alignment. Tokens the rewrite adds are looked up in the
//! conversation context and recorded as substitute or insert relations
//! between question tokens and context tokens.

mod edits;
mod lcs;
mod matrix;
mod tokens;

pub use edits::{
    extract_edit_ops, find_span, tag_edits, EditOp, EditSpan, Side, SpanKind, TokenRange,
};
pub use lcs::{lcs, lcs_len};
pub use matrix::{build_rewrite_matrix, RewriteCell, RewriteEditMatrix, RewriteRelation};
pub use tokens::{tokenize, Interaction, MatchPolicy, Occurrence, TokenSeq, DETACHED_PUNCTUATION};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DiffError {
    #[error("invalid token {token:?} at position {index}")]
    InvalidToken { index: usize, token: String },
    #[error("question is empty")]
    EmptyQuestion,
    #[error("edit operation out of bounds: {op:?}")]
    OpOutOfBounds { op: EditOp },
    #[error("cell ({i}, {j}) outside a {dim}x{dim} matrix")]
    CellOutOfBounds { i: usize, j: usize, dim: usize },
    #[error("cell ({i}, {j}) assigned both {existing} and {new}")]
    ConflictingCell {
        i: usize,
        j: usize,
        existing: RewriteRelation,
        new: RewriteRelation,
    },
    #[error("cell ({i}, {j}) = {rel} lies in the wrong block")]
    MisplacedCell {
        i: usize,
        j: usize,
        rel: RewriteRelation,
    },
    #[error("cell ({i}, {j}) = {rel} has no mirrored {} at ({j}, {i})", rel.mirror())]
    AsymmetricCell {
        i: usize,
        j: usize,
        rel: RewriteRelation,
    },
}

/// Runs tagging, op extraction and matrix expansion for one interaction.
pub fn build_from_interaction(
    interaction: &Interaction,
    rewrite: &TokenSeq,
    policy: &MatchPolicy,
) -> Result<RewriteEditMatrix, DiffError> {
    if interaction.question.is_empty() {
        return Err(DiffError::EmptyQuestion);
    }
    let context = interaction.flattened_context();
    let ops = extract_edit_ops(&interaction.question, &context, rewrite, policy);
    build_rewrite_matrix(&ops, &context, &interaction.question)
}
