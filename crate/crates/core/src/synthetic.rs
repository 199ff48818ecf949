//! Synthetic rewrite corpora whose rewrites splice verbatim context spans
//! into the question, so matrix construction followed by restoration is
//! exact.
//!
//! Construction rules:
//! - question tokens are distinct `q*` words followed by `?`; context tokens
//!   are distinct `c*` words, so no token is shared and none ends in `s`;
//! - edits are separated by at least one untouched question token, and an
//!   insert never sits directly after a substitute;
//! - substitutes never cover the final `?`; inserts never append.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset_io::RewriteExample;
use crate::rewrite_diff::{EditOp, TokenRange, TokenSeq};

#[derive(Debug, Clone)]
pub struct SyntheticExample {
    pub example: RewriteExample,
    pub ops: Vec<EditOp>,
}

fn words(prefix: &str, range: std::ops::Range<usize>) -> Vec<String> {
    range.map(|k| format!("{prefix}{k}")).collect()
}

fn pick_span(rng: &mut ChaCha8Rng, context_len: usize) -> TokenRange {
    let len = rng.random_range(1..=3.min(context_len));
    let start = rng.random_range(0..=context_len - len);
    TokenRange::new(start, start + len)
}

pub fn splice_example(rng: &mut ChaCha8Rng, id: String) -> SyntheticExample {
    let nq = rng.random_range(3..=9);
    let mut question = words("q", 0..nq);
    question.push("?".into());

    let turns = rng.random_range(1..=3);
    let mut history = Vec::with_capacity(turns);
    let mut next = 0;
    for _ in 0..turns {
        let len = rng.random_range(2..=6);
        history
            .push(TokenSeq::new(words("c", next..next + len)).expect("generated tokens are valid"));
        next += len;
    }
    let context = TokenSeq::concat(&history);

    // walk the question left to right, opening edits with some probability
    let mut ops = Vec::new();
    let mut p = 0;
    while p <= nq {
        let roll: f64 = rng.random();
        if roll < 0.25 {
            ops.push(EditOp::Insert {
                context: pick_span(rng, context.len()),
                anchor: p,
            });
            p += 1;
        } else if roll < 0.5 && p < nq {
            let len = rng.random_range(1..=2.min(nq - p));
            ops.push(EditOp::Substitute {
                context: pick_span(rng, context.len()),
                question: TokenRange::new(p, p + len),
            });
            p += len + 1;
        } else {
            p += 1;
        }
    }

    let mut rewrite = Vec::new();
    let mut q = 0;
    let mut it = ops.iter().peekable();
    while q < question.len() {
        match it.peek() {
            Some(EditOp::Insert { context: c, anchor }) if *anchor == q => {
                rewrite.extend_from_slice(&context[c.indices()]);
                it.next();
            }
            Some(EditOp::Substitute {
                context: c,
                question: r,
            }) if r.start == q => {
                rewrite.extend_from_slice(&context[c.indices()]);
                q = r.end;
                it.next();
            }
            _ => {
                rewrite.push(question[q].clone());
                q += 1;
            }
        }
    }

    let example = RewriteExample {
        example_id: id,
        history,
        question: TokenSeq::new(question).expect("generated tokens are valid"),
        rewrite: TokenSeq::new(rewrite).expect("generated tokens are valid"),
    };
    SyntheticExample { example, ops }
}

/// `count` examples with ids `syn-00000`, `syn-00001`, ...
pub fn splice_corpus(seed: u64, count: usize) -> Vec<SyntheticExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|k| splice_example(&mut rng, format!("syn-{k:05}")))
        .collect()
}
