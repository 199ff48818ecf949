//! Relation-aware transformer layers and the two-stream encoder.
//!
//! Everything runs on small dense matrices. Word vectors come from a seeded
//! hash lookup instead of a pre-trained language model, so the encoder is
//! meant for structural and numerical checks rather than task accuracy.

mod backward;
mod embed;
pub mod gradcheck;
mod layer;
mod params;
mod stream;
mod tensor;

pub use backward::{layer_backward, LayerGradients};
pub use embed::{embed_inputs, InputEmbeddings, WordEmbedding};
pub use layer::{rat_layer_forward, vanilla_layer_forward, AttentionTrace, RelationMatrix};
pub use params::{
    init_layer, init_params, EncoderConfig, EncoderParams, FeedForwardForm, FeedForwardParams,
    LayerNormParams, Precision, RatLayerParams,
};
pub use stream::{
    encoder_relations, run_stack, two_stream_encode, two_stream_encode_traced, EncodedStates,
    EncoderLayout, StreamInputs, StreamTraces,
};
pub use tensor::{ordered_sum, Matrix, Real};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EncoderError {
    #[error("invalid encoder config: {0}")]
    InvalidConfig(String),
    #[error("input contains non-finite values")]
    NonFinite,
    #[error("{what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("relation id {id} outside a vocabulary of {vocab}")]
    RelationOutOfVocab { id: usize, vocab: usize },
    #[error("trace was not produced from this input and relation matrix")]
    TraceMismatch,
    #[error("layout mismatch: {0}")]
    Layout(String),
}

use crate::rewrite_diff::{Interaction, RewriteEditMatrix};
use crate::schema_link::SchemaLinkMatrix;

/// Embeds an interaction and runs both streams at the configured precision.
///
/// Single-precision results are widened back to `f64`.
pub fn encode_interaction(
    interaction: &Interaction,
    schema: &crate::schema_link::Schema,
    link: &SchemaLinkMatrix,
    rewrite: &RewriteEditMatrix,
    params: &EncoderParams,
) -> Result<EncodedStates, EncoderError> {
    let emb = embed_inputs(interaction, schema, &params.embedding)?;
    match params.config.precision {
        Precision::Double => two_stream_encode(
            StreamInputs {
                question: &emb.question,
                context: &emb.context,
                schema: &emb.schema,
                layout: &emb.layout,
            },
            link,
            rewrite,
            params,
        ),
        Precision::Single => {
            let (q, c, s) = (
                emb.question.cast::<f32>(),
                emb.context.cast(),
                emb.schema.cast(),
            );
            let p32 = params.cast::<f32>();
            let out = two_stream_encode(
                StreamInputs {
                    question: &q,
                    context: &c,
                    schema: &s,
                    layout: &emb.layout,
                },
                link,
                rewrite,
                &p32,
            )?;
            Ok(EncodedStates {
                h_link: out.h_link.cast(),
                h_rw: out.h_rw.cast(),
                h_final: out.h_final.cast(),
            })
        }
    }
}
