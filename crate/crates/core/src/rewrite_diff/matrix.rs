use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use super::{DiffError, EditOp, TokenSeq};

/// Relation between a question token and a context token.
///
/// The `Q-C-*` variants live on question rows, `C-Q-*` on context rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RewriteRelation {
    #[serde(rename = "Q-C-Ins")]
    QcIns,
    #[serde(rename = "Q-C-Sub")]
    QcSub,
    #[serde(rename = "C-Q-Ins")]
    CqIns,
    #[serde(rename = "C-Q-Sub")]
    CqSub,
}

impl RewriteRelation {
    pub const ALL: [RewriteRelation; 4] = [
        RewriteRelation::QcIns,
        RewriteRelation::QcSub,
        RewriteRelation::CqIns,
        RewriteRelation::CqSub,
    ];

    /// Vocabulary size including the implicit `None` relation.
    pub const VOCAB_SIZE: usize = 5;

    /// Dense id; 0 is reserved for `None`.
    pub fn id(self) -> usize {
        match self {
            RewriteRelation::QcIns => 1,
            RewriteRelation::QcSub => 2,
            RewriteRelation::CqIns => 3,
            RewriteRelation::CqSub => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RewriteRelation::QcIns => "Q-C-Ins",
            RewriteRelation::QcSub => "Q-C-Sub",
            RewriteRelation::CqIns => "C-Q-Ins",
            RewriteRelation::CqSub => "C-Q-Sub",
        }
    }

    /// The relation found at the transposed cell.
    pub fn mirror(self) -> Self {
        match self {
            RewriteRelation::QcIns => RewriteRelation::CqIns,
            RewriteRelation::QcSub => RewriteRelation::CqSub,
            RewriteRelation::CqIns => RewriteRelation::QcIns,
            RewriteRelation::CqSub => RewriteRelation::QcSub,
        }
    }

    pub fn is_question_row(self) -> bool {
        matches!(self, RewriteRelation::QcIns | RewriteRelation::QcSub)
    }

    pub fn is_substitute(self) -> bool {
        matches!(self, RewriteRelation::QcSub | RewriteRelation::CqSub)
    }
}

impl fmt::Display for RewriteRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RewriteRelation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RewriteRelation::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| format!("unknown rewrite relation {s:?}"))
    }
}

/// One non-`None` cell of a relation matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewriteCell {
    pub i: usize,
    pub j: usize,
    pub rel: RewriteRelation,
}

/// Sparse bi-directional rewriting matrix over `[context; question]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RewriteEditMatrix {
    context_tokens: TokenSeq,
    question_tokens: TokenSeq,
    cells: BTreeMap<(usize, usize), RewriteRelation>,
}

impl RewriteEditMatrix {
    pub fn empty(context_tokens: TokenSeq, question_tokens: TokenSeq) -> Self {
        Self {
            context_tokens,
            question_tokens,
            cells: BTreeMap::new(),
        }
    }

    /// Structural constructor: checks bounds and duplicate cells only.
    ///
    /// Semantic checks (block placement, mirroring) are done by [`validate`](Self::validate).
    pub fn from_cells(
        context_tokens: TokenSeq,
        question_tokens: TokenSeq,
        cells: impl IntoIterator<Item = RewriteCell>,
    ) -> Result<Self, DiffError> {
        let mut m = Self::empty(context_tokens, question_tokens);
        let dim = m.dim();
        for c in cells {
            if c.i >= dim || c.j >= dim {
                return Err(DiffError::CellOutOfBounds {
                    i: c.i,
                    j: c.j,
                    dim,
                });
            }
            if let Some(prev) = m.cells.insert((c.i, c.j), c.rel) {
                return Err(DiffError::ConflictingCell {
                    i: c.i,
                    j: c.j,
                    existing: prev,
                    new: c.rel,
                });
            }
        }
        Ok(m)
    }

    pub fn context_tokens(&self) -> &TokenSeq {
        &self.context_tokens
    }

    pub fn question_tokens(&self) -> &TokenSeq {
        &self.question_tokens
    }

    pub fn context_len(&self) -> usize {
        self.context_tokens.len()
    }

    pub fn question_len(&self) -> usize {
        self.question_tokens.len()
    }

    pub fn dim(&self) -> usize {
        self.context_len() + self.question_len()
    }

    /// Matrix position of question token `q`.
    pub fn question_pos(&self, q: usize) -> usize {
        self.context_len() + q
    }

    pub fn is_question_pos(&self, pos: usize) -> bool {
        pos >= self.context_len()
    }

    pub fn get(&self, i: usize, j: usize) -> Option<RewriteRelation> {
        self.cells.get(&(i, j)).copied()
    }

    /// Non-`None` cells sorted by `(i, j)`.
    pub fn cells(&self) -> impl Iterator<Item = RewriteCell> + '_ {
        self.cells
            .iter()
            .map(|(&(i, j), &rel)| RewriteCell { i, j, rel })
    }

    pub fn non_none_count(&self) -> usize {
        self.cells.len()
    }

    pub fn is_all_none(&self) -> bool {
        self.cells.is_empty()
    }

    fn set(&mut self, i: usize, j: usize, rel: RewriteRelation) -> Result<(), DiffError> {
        match self.cells.get(&(i, j)) {
            Some(&existing) if existing != rel => Err(DiffError::ConflictingCell {
                i,
                j,
                existing,
                new: rel,
            }),
            _ => {
                self.cells.insert((i, j), rel);
                Ok(())
            }
        }
    }

    /// Checks block placement and bi-directional mirroring.
    pub fn validate(&self) -> Result<(), DiffError> {
        for (&(i, j), &rel) in &self.cells {
            let row_q = self.is_question_pos(i);
            let col_q = self.is_question_pos(j);
            if row_q == col_q || row_q != rel.is_question_row() {
                return Err(DiffError::MisplacedCell { i, j, rel });
            }
            if self.get(j, i) != Some(rel.mirror()) {
                return Err(DiffError::AsymmetricCell { i, j, rel });
            }
        }
        Ok(())
    }

    /// Dense row-major relation ids (0 = `None`).
    pub fn relation_ids(&self) -> Vec<usize> {
        let n = self.dim();
        let mut ids = vec![0; n * n];
        for (&(i, j), rel) in &self.cells {
            ids[i * n + j] = rel.id();
        }
        ids
    }

    /// Counts of each relation type.
    pub fn stats(&self) -> BTreeMap<RewriteRelation, usize> {
        let mut counts: BTreeMap<_, _> = RewriteRelation::ALL.iter().map(|&r| (r, 0)).collect();
        for rel in self.cells.values() {
            *counts.entry(*rel).or_default() += 1;
        }
        counts
    }
}

/// Expands edit operations into the bi-directional matrix.
///
/// Substitutes pair every context token of the op with every replaced
/// question token; inserts pair every context token with the anchor token.
/// An append anchor (`anchor == question.len()`) is placed on the last
/// question token.
pub fn build_rewrite_matrix(
    ops: &[EditOp],
    context: &TokenSeq,
    question: &TokenSeq,
) -> Result<RewriteEditMatrix, DiffError> {
    let mut m = RewriteEditMatrix::empty(context.clone(), question.clone());
    let (nc, nq) = (context.len(), question.len());
    for op in ops {
        let ctx = op.context_range();
        if ctx.is_empty() || ctx.end > nc {
            return Err(DiffError::OpOutOfBounds { op: op.clone() });
        }
        let (targets, forward, backward) = match op {
            EditOp::Substitute { question: qr, .. } => {
                if qr.is_empty() || qr.end > nq {
                    return Err(DiffError::OpOutOfBounds { op: op.clone() });
                }
                (qr.indices(), RewriteRelation::CqSub, RewriteRelation::QcSub)
            }
            EditOp::Insert { anchor, .. } => {
                if nq == 0 || *anchor > nq {
                    return Err(DiffError::OpOutOfBounds { op: op.clone() });
                }
                let a = (*anchor).min(nq - 1);
                (a..a + 1, RewriteRelation::CqIns, RewriteRelation::QcIns)
            }
        };
        for c in ctx.indices() {
            for q in targets.clone() {
                let qp = m.question_pos(q);
                m.set(c, qp, forward)?;
                m.set(qp, c, backward)?;
            }
        }
    }
    Ok(m)
}
