use serde::{Deserialize, Serialize};
use std::fmt;

use super::lcs::lcs;
use super::{MatchPolicy, Occurrence};

/// Half-open token interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TokenRange {
    pub start: usize,
    pub end: usize,
}

impl TokenRange {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }

    pub fn contains(&self, index: usize) -> bool {
        self.start <= index && index < self.end
    }

    pub fn indices(&self) -> std::ops::Range<usize> {
        self.start..self.end
    }

    pub fn overlaps(&self, other: &TokenRange) -> bool {
        self.start < other.end && other.start < self.end
    }
}

impl fmt::Display for TokenRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpanKind {
    Add,
    Del,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Rewrite,
    Question,
}

/// A maximal run of tokens outside the LCS alignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditSpan {
    pub kind: SpanKind,
    pub range: TokenRange,
    pub side: Side,
}

/// An edit turning the question into its rewrite using context tokens.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum EditOp {
    /// Replace `question` tokens with the `context` tokens.
    Substitute {
        context: TokenRange,
        question: TokenRange,
    },
    /// Insert the `context` tokens before question token `anchor`.
    ///
    /// `anchor == question.len()` means append after the last token.
    Insert { context: TokenRange, anchor: usize },
}

impl EditOp {
    pub fn context_range(&self) -> TokenRange {
        match self {
            EditOp::Substitute { context, .. } | EditOp::Insert { context, .. } => *context,
        }
    }

    /// First question index the op touches.
    pub fn question_anchor(&self) -> usize {
        match self {
            EditOp::Substitute { question, .. } => question.start,
            EditOp::Insert { anchor, .. } => *anchor,
        }
    }

    pub fn question_range(&self) -> Option<TokenRange> {
        match self {
            EditOp::Substitute { question, .. } => Some(*question),
            EditOp::Insert { .. } => None,
        }
    }

    pub fn is_substitute(&self) -> bool {
        matches!(self, EditOp::Substitute { .. })
    }
}

fn runs_outside(len: usize, aligned: impl Iterator<Item = usize>) -> Vec<TokenRange> {
    let mut inside = vec![false; len];
    for i in aligned {
        inside[i] = true;
    }
    let mut runs = Vec::new();
    let mut start = None;
    for (i, &hit) in inside.iter().enumerate() {
        match (hit, start) {
            (false, None) => start = Some(i),
            (true, Some(s)) => {
                runs.push(TokenRange::new(s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push(TokenRange::new(s, len));
    }
    runs
}

/// DEL spans over the question and ADD spans over the rewrite.
pub fn tag_edits(
    question: &[String],
    rewrite: &[String],
    policy: &MatchPolicy,
) -> (Vec<EditSpan>, Vec<EditSpan>) {
    let alignment = lcs(question, rewrite, policy);
    tag_from_alignment(question.len(), rewrite.len(), &alignment)
}

fn tag_from_alignment(
    question_len: usize,
    rewrite_len: usize,
    alignment: &[(usize, usize)],
) -> (Vec<EditSpan>, Vec<EditSpan>) {
    let dels = runs_outside(question_len, alignment.iter().map(|p| p.0))
        .into_iter()
        .map(|range| EditSpan {
            kind: SpanKind::Del,
            range,
            side: Side::Question,
        })
        .collect();
    let adds = runs_outside(rewrite_len, alignment.iter().map(|p| p.1))
        .into_iter()
        .map(|range| EditSpan {
            kind: SpanKind::Add,
            range,
            side: Side::Rewrite,
        })
        .collect();
    (dels, adds)
}

/// Locates `needle` as a contiguous run inside `haystack`.
pub fn find_span(
    haystack: &[String],
    needle: &[String],
    policy: &MatchPolicy,
) -> Option<TokenRange> {
    if needle.is_empty() || needle.len() > haystack.len() {
        return None;
    }
    let hay = policy.normalize_all(haystack);
    let pat = policy.normalize_all(needle);
    let mut starts = (0..=hay.len() - pat.len()).filter(|&s| hay[s..s + pat.len()] == pat[..]);
    let start = match policy.occurrence {
        Occurrence::First => starts.next(),
        Occurrence::Last => starts.next_back(),
    }?;
    Some(TokenRange::new(start, start + pat.len()))
}

/// Derives substitute/insert operations from a (question, context, rewrite) triple.
///
/// Each ADD span sits in the gap between two consecutive LCS anchors. When
/// that gap also holds question tokens (a DEL span) the ADD span substitutes
/// them; otherwise it is inserted before the right anchor. ADD spans that do
/// not occur in the context are dropped.
pub fn extract_edit_ops(
    question: &[String],
    context: &[String],
    rewrite: &[String],
    policy: &MatchPolicy,
) -> Vec<EditOp> {
    let alignment = lcs(question, rewrite, policy);
    let (_, adds) = tag_from_alignment(question.len(), rewrite.len(), &alignment);

    let mut ops = Vec::with_capacity(adds.len());
    for add in adds {
        let Some(context_range) = find_span(context, &rewrite[add.range.indices()], policy) else {
            log::debug!("ADD span {} not in context, ignored", add.range);
            continue;
        };
        let gap_start = alignment
            .iter()
            .rev()
            .find(|&&(_, r)| r < add.range.start)
            .map_or(0, |&(q, _)| q + 1);
        let gap_end = alignment
            .iter()
            .find(|&&(_, r)| r >= add.range.end)
            .map_or(question.len(), |&(q, _)| q);
        let op = if gap_start < gap_end {
            EditOp::Substitute {
                context: context_range,
                question: TokenRange::new(gap_start, gap_end),
            }
        } else {
            EditOp::Insert {
                context: context_range,
                anchor: gap_end,
            }
        };
        ops.push(op);
    }
    ops
}
