use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::stream::EncoderLayout;
use super::tensor::Matrix;
use super::EncoderError;
use crate::rewrite_diff::Interaction;
use crate::schema_link::Schema;

/// Word vectors derived from a hash of `(seed, word)`; every word, seen or
/// not, gets a fixed vector with entries in `[-1, 1)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordEmbedding {
    pub dim: usize,
    pub seed: u64,
}

impl WordEmbedding {
    pub fn vector(&self, word: &str) -> Vec<f64> {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(word.as_bytes());
        let digest: [u8; 32] = hasher.finalize().into();
        let mut rng = ChaCha8Rng::from_seed(digest);
        (0..self.dim).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    pub fn lookup(&self, words: &[String]) -> Matrix {
        let rows: Vec<Vec<f64>> = words
            .iter()
            .map(|w| self.vector(&w.to_lowercase()))
            .collect();
        if rows.is_empty() {
            return Matrix::zeros(0, self.dim);
        }
        Matrix::from_rows(&rows)
    }

    /// Arithmetic mean of the word vectors of a multi-word name.
    pub fn mean_vector(&self, words: &[String]) -> Vec<f64> {
        let mut acc = vec![0.0; self.dim];
        for w in words {
            for (a, v) in acc.iter_mut().zip(self.vector(&w.to_lowercase())) {
                *a += v;
            }
        }
        let n = words.len().max(1) as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }
}

/// Per-block input embeddings, in encoder order.
#[derive(Debug, Clone, PartialEq)]
pub struct InputEmbeddings {
    pub question: Matrix,
    /// Context turns most recent first, tokens in reading order within a turn.
    pub context: Matrix,
    /// Tables then columns, one row per element.
    pub schema: Matrix,
    pub layout: EncoderLayout,
}

pub fn embed_inputs(
    interaction: &Interaction,
    schema: &Schema,
    embedding: &WordEmbedding,
) -> Result<InputEmbeddings, EncoderError> {
    if interaction.question.is_empty() {
        return Err(EncoderError::Layout("question is empty".into()));
    }
    let question = embedding.lookup(&interaction.question);
    let context_words: Vec<String> = interaction
        .context_turns
        .iter()
        .rev()
        .flat_map(|t| t.iter().cloned())
        .collect();
    let context = embedding.lookup(&context_words);
    let schema_rows: Vec<Vec<f64>> = schema
        .element_names()
        .map(|n| embedding.mean_vector(n))
        .collect();
    let schema_m = if schema_rows.is_empty() {
        Matrix::zeros(0, embedding.dim)
    } else {
        Matrix::from_rows(&schema_rows)
    };
    let layout = EncoderLayout {
        question: interaction.question.len(),
        context_turns: interaction.context_turn_lengths(),
        tables: schema.tables().len(),
        columns: schema.columns().len(),
    };
    Ok(InputEmbeddings {
        question,
        context,
        schema: schema_m,
        layout,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rewrite_diff::TokenSeq;
    use crate::schema_link::{Column, ColumnType};
    use std::collections::BTreeSet;

    #[test]
    fn lookup_is_deterministic_and_case_folded() {
        let e = WordEmbedding { dim: 6, seed: 3 };
        assert_eq!(e.vector("city"), e.vector("city"));
        assert_ne!(e.vector("city"), e.vector("town"));
        assert_ne!(
            e.vector("city"),
            WordEmbedding { dim: 6, seed: 4 }.vector("city")
        );
        let words = vec!["City".to_string()];
        assert_eq!(e.lookup(&words).row(0), e.vector("city").as_slice());
    }

    #[test]
    fn schema_rows_are_name_means() {
        let e = WordEmbedding { dim: 4, seed: 0 };
        let schema = Schema::new(
            vec![TokenSeq::from_words("city")],
            vec![Column {
                name: TokenSeq::from_words("flight number"),
                table: 0,
                col_type: ColumnType::Number,
            }],
            BTreeSet::new(),
            BTreeSet::new(),
        )
        .unwrap();
        let inter = Interaction::new(
            vec![
                TokenSeq::from_words("list cities"),
                TokenSeq::from_words("flight"),
            ],
            TokenSeq::from_words("which flight ?"),
            None,
        )
        .unwrap();
        let emb = embed_inputs(&inter, &schema, &e).unwrap();
        assert_eq!(emb.schema.row(0), e.vector("city").as_slice());
        let (a, b) = (e.vector("flight"), e.vector("number"));
        for c in 0..4 {
            assert!((emb.schema.get(1, c) - (a[c] + b[c]) / 2.0).abs() < 1e-15);
        }
        // most recent turn first: "flight" then "list cities"
        assert_eq!(emb.context.row(0), emb.question.row(1));
        assert_eq!(emb.context.row(1), e.vector("list").as_slice());
        assert_eq!(emb.layout.context_turns, vec![2, 1]);
    }
}
