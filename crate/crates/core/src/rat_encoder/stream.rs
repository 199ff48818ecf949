//! Two-stream relation matrix encoder.
//!
//! The linking stream runs over `[question; context; schema]` with the
//! schema-linking relations, the rewriting stream over `[question; context]`
//! with the rewriting relations. Question and context rows of the result are
//! the sums of both streams; schema rows come from the linking stream only.

use serde::{Deserialize, Serialize};

use super::layer::{rat_layer_forward, AttentionTrace, RelationMatrix};
use super::params::{EncoderParams, RatLayerParams};
use super::tensor::{Matrix, Real};
use super::EncoderError;
use crate::rewrite_diff::RewriteEditMatrix;
use crate::schema_link::SchemaLinkMatrix;

/// Block sizes of the encoder input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderLayout {
    pub question: usize,
    /// Token counts of the context turns in chronological order.
    pub context_turns: Vec<usize>,
    pub tables: usize,
    pub columns: usize,
}

impl EncoderLayout {
    pub fn context(&self) -> usize {
        self.context_turns.iter().sum()
    }

    pub fn utterance(&self) -> usize {
        self.question + self.context()
    }

    pub fn schema(&self) -> usize {
        self.tables + self.columns
    }

    pub fn total(&self) -> usize {
        self.utterance() + self.schema()
    }

    /// For each encoder context position (most recent turn first), the
    /// position in the chronologically flattened context.
    pub fn context_order(&self) -> Vec<usize> {
        let mut starts = Vec::with_capacity(self.context_turns.len());
        let mut acc = 0;
        for &len in &self.context_turns {
            starts.push(acc);
            acc += len;
        }
        self.context_turns
            .iter()
            .zip(starts)
            .rev()
            .flat_map(|(&len, start)| start..start + len)
            .collect()
    }

    /// Encoder position -> position in a `[question; context; schema]` link matrix.
    pub fn link_permutation(&self) -> Vec<usize> {
        let q = self.question;
        (0..q)
            .chain(self.context_order().into_iter().map(|c| q + c))
            .chain(self.utterance()..self.total())
            .collect()
    }

    /// Encoder position -> position in a `[context; question]` rewrite matrix.
    pub fn rewrite_permutation(&self) -> Vec<usize> {
        let nc = self.context();
        (0..self.question)
            .map(|q| nc + q)
            .chain(self.context_order())
            .collect()
    }
}

/// Hidden states of both streams and their aggregate, all in encoder order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EncodedStates<T = f64> {
    pub h_link: Matrix<T>,
    pub h_rw: Matrix<T>,
    pub h_final: Matrix<T>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StreamTraces<T = f64> {
    pub link: Vec<AttentionTrace<T>>,
    pub rw: Vec<AttentionTrace<T>>,
}

/// Relation matrices re-indexed into encoder order.
pub fn encoder_relations(
    layout: &EncoderLayout,
    link: &SchemaLinkMatrix,
    rewrite: &RewriteEditMatrix,
) -> Result<(RelationMatrix, RelationMatrix), EncoderError> {
    let l = link.layout();
    if l.question != layout.question
        || l.context != layout.context()
        || l.tables != layout.tables
        || l.columns != layout.columns
    {
        return Err(EncoderError::Layout(format!(
            "linking matrix layout {l:?} does not match encoder inputs {layout:?}"
        )));
    }
    if rewrite.question_len() != layout.question || rewrite.context_len() != layout.context() {
        return Err(EncoderError::Layout(format!(
            "rewrite matrix covers {} question and {} context tokens, inputs have {} and {}",
            rewrite.question_len(),
            rewrite.context_len(),
            layout.question,
            layout.context()
        )));
    }
    let link_ids = RelationMatrix::new(link.dim(), link.relation_ids());
    let rw_ids = RelationMatrix::new(rewrite.dim(), rewrite.relation_ids());
    Ok((
        link_ids.gather(&layout.link_permutation()),
        rw_ids.gather(&layout.rewrite_permutation()),
    ))
}

/// Applies the layers in order, optionally keeping each layer's trace.
pub fn run_stack<T: Real>(
    x: &Matrix<T>,
    relations: &RelationMatrix,
    layers: &[RatLayerParams<T>],
    traces: Option<&mut Vec<AttentionTrace<T>>>,
) -> Result<Matrix<T>, EncoderError> {
    let mut h = x.clone();
    let mut kept = Vec::new();
    for layer in layers {
        let (y, trace) = rat_layer_forward(&h, relations, layer)?;
        if traces.is_some() {
            kept.push(trace);
        }
        h = y;
    }
    if let Some(t) = traces {
        t.extend(kept);
    }
    Ok(h)
}

fn check_rows<T: Real>(
    what: &'static str,
    m: &Matrix<T>,
    expected: usize,
) -> Result<(), EncoderError> {
    if m.rows() != expected {
        return Err(EncoderError::DimensionMismatch {
            what,
            expected,
            got: m.rows(),
        });
    }
    Ok(())
}

pub struct StreamInputs<'a, T> {
    pub question: &'a Matrix<T>,
    pub context: &'a Matrix<T>,
    pub schema: &'a Matrix<T>,
    pub layout: &'a EncoderLayout,
}

pub fn two_stream_encode_traced<T: Real>(
    inputs: StreamInputs<'_, T>,
    link: &SchemaLinkMatrix,
    rewrite: &RewriteEditMatrix,
    params: &EncoderParams<T>,
    keep_traces: bool,
) -> Result<(EncodedStates<T>, Option<StreamTraces<T>>), EncoderError> {
    let layout = inputs.layout;
    check_rows("question rows", inputs.question, layout.question)?;
    check_rows("context rows", inputs.context, layout.context())?;
    check_rows("schema rows", inputs.schema, layout.schema())?;
    let (link_rel, rw_rel) = encoder_relations(layout, link, rewrite)?;

    let h_link0 = Matrix::vstack(&[inputs.question, inputs.context, inputs.schema]);
    let h_rw0 = Matrix::vstack(&[inputs.question, inputs.context]);

    let mut link_traces = Vec::new();
    let mut rw_traces = Vec::new();
    let h_link = run_stack(
        &h_link0,
        &link_rel,
        &params.link_layers,
        keep_traces.then_some(&mut link_traces),
    )?;
    let h_rw = run_stack(
        &h_rw0,
        &rw_rel,
        &params.rw_layers,
        keep_traces.then_some(&mut rw_traces),
    )?;

    let nu = layout.utterance();
    let utter = h_link.row_slice(0, nu).add(&h_rw);
    let schema_rows = h_link.row_slice(nu, h_link.rows());
    let h_final = Matrix::vstack(&[&utter, &schema_rows]);

    let traces = keep_traces.then_some(StreamTraces {
        link: link_traces,
        rw: rw_traces,
    });
    Ok((
        EncodedStates {
            h_link,
            h_rw,
            h_final,
        },
        traces,
    ))
}

pub fn two_stream_encode<T: Real>(
    inputs: StreamInputs<'_, T>,
    link: &SchemaLinkMatrix,
    rewrite: &RewriteEditMatrix,
    params: &EncoderParams<T>,
) -> Result<EncodedStates<T>, EncoderError> {
    two_stream_encode_traced(inputs, link, rewrite, params, false).map(|(s, _)| s)
}
