//! Rebuilds a rewritten question from a rewriting edit matrix.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

use crate::rewrite_diff::{
    DiffError, EditOp, RewriteEditMatrix, RewriteRelation, TokenRange, TokenSeq,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RestoreError {
    #[error("malformed matrix: {0}")]
    Matrix(#[from] DiffError),
    #[error("matrix {which} tokens do not match the given {which}")]
    TokenMismatch { which: &'static str },
    #[error("substitutions over question ranges {first} and {second} overlap")]
    OverlappingSubstitutes {
        first: TokenRange,
        second: TokenRange,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RestoredQuestion {
    pub tokens: TokenSeq,
    pub applied_ops: Vec<EditOp>,
}

fn contiguous_runs(sorted: &[usize]) -> Vec<TokenRange> {
    let mut runs: Vec<TokenRange> = Vec::new();
    for &i in sorted {
        match runs.last_mut() {
            Some(r) if r.end == i => r.end += 1,
            _ => runs.push(TokenRange::new(i, i + 1)),
        }
    }
    runs
}

/// Groups matrix cells back into edit operations.
///
/// Context tokens that are contiguous and share a relation type and a
/// question target range form one op. Ops come back ordered by question
/// position, substitutes before inserts, then by context position.
pub fn recover_ops(matrix: &RewriteEditMatrix) -> Result<Vec<EditOp>, DiffError> {
    matrix.validate()?;
    let nq = matrix.question_len();

    // question target range -> context tokens
    let mut subs: BTreeMap<TokenRange, Vec<usize>> = BTreeMap::new();
    // anchor -> context tokens
    let mut inserts: BTreeMap<usize, Vec<usize>> = BTreeMap::new();

    for c in 0..matrix.context_len() {
        let mut sub_cols = Vec::new();
        for q in 0..nq {
            match matrix.get(c, matrix.question_pos(q)) {
                Some(RewriteRelation::CqSub) => sub_cols.push(q),
                Some(RewriteRelation::CqIns) => inserts.entry(q).or_default().push(c),
                _ => {}
            }
        }
        for range in contiguous_runs(&sub_cols) {
            subs.entry(range).or_default().push(c);
        }
    }

    let mut ops = Vec::new();
    for (question, ctx) in subs {
        ops.extend(
            contiguous_runs(&ctx)
                .into_iter()
                .map(|context| EditOp::Substitute { context, question }),
        );
    }
    for (anchor, ctx) in inserts {
        ops.extend(
            contiguous_runs(&ctx)
                .into_iter()
                .map(|context| EditOp::Insert { context, anchor }),
        );
    }
    ops.sort_by_key(|op| {
        (
            op.question_anchor(),
            !op.is_substitute(),
            op.context_range(),
        )
    });
    Ok(ops)
}

/// Applies the matrix's edits to the question.
///
/// All positions refer to the original question. At a given question
/// index, inserted context spans come first (in context order), followed
/// by the substituted span or the original token.
pub fn restore(
    question: &TokenSeq,
    context: &TokenSeq,
    matrix: &RewriteEditMatrix,
) -> Result<RestoredQuestion, RestoreError> {
    if matrix.question_tokens() != question {
        return Err(RestoreError::TokenMismatch { which: "question" });
    }
    if matrix.context_tokens() != context {
        return Err(RestoreError::TokenMismatch { which: "context" });
    }
    let ops = recover_ops(matrix)?;
    let tokens = apply_ops(question, context, &ops)?;
    Ok(RestoredQuestion {
        tokens,
        applied_ops: ops,
    })
}

/// Restores from the tokens stored in the matrix itself.
pub fn restore_matrix(matrix: &RewriteEditMatrix) -> Result<RestoredQuestion, RestoreError> {
    restore(matrix.question_tokens(), matrix.context_tokens(), matrix)
}

fn apply_ops(
    question: &TokenSeq,
    context: &TokenSeq,
    ops: &[EditOp],
) -> Result<TokenSeq, RestoreError> {
    let mut subs: BTreeMap<usize, (TokenRange, Vec<TokenRange>)> = BTreeMap::new();
    let mut inserts: BTreeMap<usize, Vec<TokenRange>> = BTreeMap::new();
    for op in ops {
        match *op {
            EditOp::Substitute {
                context: ctx,
                question: qr,
            } => {
                let entry = subs.entry(qr.start).or_insert_with(|| (qr, Vec::new()));
                if entry.0 != qr {
                    return Err(RestoreError::OverlappingSubstitutes {
                        first: entry.0,
                        second: qr,
                    });
                }
                entry.1.push(ctx);
            }
            EditOp::Insert {
                context: ctx,
                anchor,
            } => inserts.entry(anchor).or_default().push(ctx),
        }
    }
    let ranges: Vec<TokenRange> = subs.values().map(|(r, _)| *r).collect();
    for pair in ranges.windows(2) {
        if pair[0].overlaps(&pair[1]) {
            return Err(RestoreError::OverlappingSubstitutes {
                first: pair[0],
                second: pair[1],
            });
        }
    }
    for spans in subs
        .values_mut()
        .map(|(_, s)| s)
        .chain(inserts.values_mut())
    {
        spans.sort();
    }

    let splice = |out: &mut Vec<String>, spans: &[TokenRange]| {
        for span in spans {
            out.extend_from_slice(&context[span.indices()]);
        }
    };
    let mut out = Vec::with_capacity(question.len());
    let mut q = 0;
    while q < question.len() {
        if let Some((range, spans)) = subs.get(&q) {
            for a in range.indices() {
                if let Some(ins) = inserts.get(&a) {
                    splice(&mut out, ins);
                }
            }
            splice(&mut out, spans);
            q = range.end;
        } else {
            if let Some(ins) = inserts.get(&q) {
                splice(&mut out, ins);
            }
            out.push(question[q].clone());
            q += 1;
        }
    }
    if let Some(ins) = inserts.get(&question.len()) {
        splice(&mut out, ins);
    }
    Ok(TokenSeq::new(out).expect("tokens are copied from valid sequences"))
}
