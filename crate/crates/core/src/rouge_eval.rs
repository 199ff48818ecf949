//! ROUGE-1/2/L scoring over lowercased tokens.
//!
//! Scores are in `[0, 1]`. No stemming is applied.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

use crate::rewrite_diff::{lcs_len, MatchPolicy};

/// Normalization applied to both sides before scoring.
pub const NORMALIZATION: &str = "lowercase, whitespace tokens, no stemming";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RougeError {
    #[error("n-gram order must be at least 1")]
    ZeroOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScore {
    pub fn from_pr(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f1,
        }
    }

    fn from_counts(matched: usize, candidate_total: usize, reference_total: usize) -> Self {
        let ratio = |total: usize| {
            if total == 0 {
                0.0
            } else {
                matched as f64 / total as f64
            }
        };
        Self::from_pr(ratio(candidate_total), ratio(reference_total))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CorpusRougeReport {
    pub r1: RougeScore,
    pub r2: RougeScore,
    pub rl: RougeScore,
    #[serde(rename = "pairs")]
    pub pair_count: usize,
}

fn lower(tokens: &[String]) -> Vec<String> {
    tokens.iter().map(|t| t.to_lowercase()).collect()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// Clipped n-gram match count plus the candidate and reference n-gram totals.
pub fn ngram_overlap(
    candidate: &[String],
    reference: &[String],
    n: usize,
) -> Result<(usize, usize, usize), RougeError> {
    if n == 0 {
        return Err(RougeError::ZeroOrder);
    }
    let (cand, refs) = (lower(candidate), lower(reference));
    let cand_counts = ngram_counts(&cand, n);
    let ref_counts = ngram_counts(&refs, n);
    let matched = cand_counts
        .iter()
        .map(|(gram, &c)| c.min(ref_counts.get(gram).copied().unwrap_or(0)))
        .sum();
    let total = |len: usize| (len + 1).saturating_sub(n);
    Ok((matched, total(cand.len()), total(refs.len())))
}

pub fn rouge_n(
    candidate: &[String],
    reference: &[String],
    n: usize,
) -> Result<RougeScore, RougeError> {
    let (matched, cand_total, ref_total) = ngram_overlap(candidate, reference, n)?;
    Ok(RougeScore::from_counts(matched, cand_total, ref_total))
}

pub fn rouge_l(candidate: &[String], reference: &[String]) -> RougeScore {
    let (cand, refs) = (lower(candidate), lower(reference));
    let l = lcs_len(&cand, &refs, &MatchPolicy::EXACT);
    RougeScore::from_counts(l, cand.len(), refs.len())
}

fn mean(scores: &[RougeScore]) -> RougeScore {
    if scores.is_empty() {
        return RougeScore::default();
    }
    let n = scores.len() as f64;
    let (p, r, f) = scores.iter().fold((0.0, 0.0, 0.0), |acc, s| {
        (acc.0 + s.precision, acc.1 + s.recall, acc.2 + s.f1)
    });
    RougeScore {
        precision: p / n,
        recall: r / n,
        f1: f / n,
    }
}

/// Unweighted per-pair means. Pairs are scored in parallel and summed in
/// input order, so results do not depend on scheduling.
pub fn corpus_rouge<C, R>(pairs: &[(C, R)]) -> CorpusRougeReport
where
    C: AsRef<[String]> + Sync,
    R: AsRef<[String]> + Sync,
{
    let per_pair: Vec<[RougeScore; 3]> = pairs
        .par_iter()
        .map(|(c, r)| {
            let (c, r) = (c.as_ref(), r.as_ref());
            [
                rouge_n(c, r, 1).expect("order 1"),
                rouge_n(c, r, 2).expect("order 2"),
                rouge_l(c, r),
            ]
        })
        .collect();
    let column = |k: usize| per_pair.iter().map(|s| s[k]).collect::<Vec<_>>();
    CorpusRougeReport {
        r1: mean(&column(0)),
        r2: mean(&column(1)),
        rl: mean(&column(2)),
        pair_count: pairs.len(),
    }
}
