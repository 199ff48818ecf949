use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::embed::WordEmbedding;
use super::tensor::{Matrix, Real};
use super::EncoderError;
use crate::rewrite_diff::RewriteRelation;
use crate::schema_link::SchemaRelation;

/// Shape of the position-wise feed-forward block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedForwardForm {
    /// `W2 · ReLU(W1 · y + b1) + b2`
    #[default]
    TwoLayer,
    /// `W · ReLU(y) + b`
    SingleProjection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    #[default]
    Double,
    Single,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    /// Model width.
    pub d_x: usize,
    /// Attention width, split evenly across heads.
    pub d_z: usize,
    pub heads: usize,
    pub layers_link: usize,
    pub layers_rw: usize,
    /// Feed-forward width; `4 * d_x` when unset.
    pub d_ff: Option<usize>,
    pub link_vocab: usize,
    pub rw_vocab: usize,
    pub seed: u64,
    pub feed_forward: FeedForwardForm,
    pub layer_norm_eps: f64,
    pub precision: Precision,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            d_x: 16,
            d_z: 16,
            heads: 2,
            layers_link: 8,
            layers_rw: 4,
            d_ff: None,
            link_vocab: SchemaRelation::VOCAB_SIZE,
            rw_vocab: RewriteRelation::VOCAB_SIZE,
            seed: 0,
            feed_forward: FeedForwardForm::TwoLayer,
            layer_norm_eps: 1e-5,
            precision: Precision::Double,
        }
    }
}

impl EncoderConfig {
    /// A small configuration for tests and inspection.
    pub fn tiny() -> Self {
        Self {
            d_x: 8,
            d_z: 8,
            heads: 2,
            layers_link: 2,
            layers_rw: 1,
            ..Self::default()
        }
    }

    pub fn ff_width(&self) -> usize {
        self.d_ff.unwrap_or(4 * self.d_x)
    }

    pub fn head_dim(&self) -> usize {
        self.d_z / self.heads
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        let fail = |msg: String| Err(EncoderError::InvalidConfig(msg));
        if self.d_x == 0 || self.heads == 0 {
            return fail("d_x and heads must be positive".into());
        }
        if !self.d_z.is_multiple_of(self.heads) {
            return fail(format!(
                "d_z = {} is not divisible by {} heads",
                self.d_z, self.heads
            ));
        }
        if self.d_z != self.d_x {
            return fail(format!(
                "the attention residual needs d_z == d_x (got d_z = {}, d_x = {})",
                self.d_z, self.d_x
            ));
        }
        if self.layers_link == 0 || self.layers_rw == 0 {
            return fail("both streams need at least one layer".into());
        }
        if self.ff_width() == 0 && self.feed_forward == FeedForwardForm::TwoLayer {
            return fail("d_ff must be positive".into());
        }
        if self.link_vocab < SchemaRelation::VOCAB_SIZE
            || self.rw_vocab < RewriteRelation::VOCAB_SIZE
        {
            return fail("relation vocabularies are smaller than the relation sets".into());
        }
        if self.layer_norm_eps.is_nan() || self.layer_norm_eps <= 0.0 {
            return fail("layer_norm_eps must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerNormParams<T = f64> {
    pub gain: Vec<T>,
    pub bias: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedForwardParams<T = f64> {
    /// Absent for [`FeedForwardForm::SingleProjection`].
    pub w1: Option<Matrix<T>>,
    pub b1: Option<Vec<T>>,
    pub w2: Matrix<T>,
    pub b2: Vec<T>,
}

/// Weights of one relation-aware layer.
///
/// Heads own consecutive column blocks of `w_q`, `w_k`, `w_v`. Relation
/// embeddings have head width and are shared by all heads; row 0 is `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatLayerParams<T = f64> {
    pub heads: usize,
    pub w_q: Matrix<T>,
    pub w_k: Matrix<T>,
    pub w_v: Matrix<T>,
    pub rel_k: Matrix<T>,
    pub rel_v: Matrix<T>,
    pub ff: FeedForwardParams<T>,
    pub ln1: LayerNormParams<T>,
    pub ln2: LayerNormParams<T>,
    pub eps: f64,
}

impl<T: Real> RatLayerParams<T> {
    pub fn d_x(&self) -> usize {
        self.w_q.rows()
    }

    pub fn d_z(&self) -> usize {
        self.w_q.cols()
    }

    pub fn head_dim(&self) -> usize {
        self.d_z() / self.heads
    }

    pub fn vocab(&self) -> usize {
        self.rel_k.rows()
    }

    pub fn feed_forward_form(&self) -> FeedForwardForm {
        if self.ff.w1.is_some() {
            FeedForwardForm::TwoLayer
        } else {
            FeedForwardForm::SingleProjection
        }
    }

    /// Same weights with both relation tables zeroed.
    pub fn with_zero_relations(&self) -> Self {
        let mut p = self.clone();
        p.rel_k = Matrix::zeros(p.rel_k.rows(), p.rel_k.cols());
        p.rel_v = Matrix::zeros(p.rel_v.rows(), p.rel_v.cols());
        p
    }

    /// Every tensor in a fixed order, by name.
    pub fn tensors(&self) -> Vec<(&'static str, &[T])> {
        let mut out = vec![
            ("w_q", self.w_q.data()),
            ("w_k", self.w_k.data()),
            ("w_v", self.w_v.data()),
            ("rel_k", self.rel_k.data()),
            ("rel_v", self.rel_v.data()),
        ];
        if let (Some(w1), Some(b1)) = (&self.ff.w1, &self.ff.b1) {
            out.push(("ff.w1", w1.data()));
            out.push(("ff.b1", b1.as_slice()));
        }
        out.extend([
            ("ff.w2", self.ff.w2.data()),
            ("ff.b2", self.ff.b2.as_slice()),
            ("ln1.gain", self.ln1.gain.as_slice()),
            ("ln1.bias", self.ln1.bias.as_slice()),
            ("ln2.gain", self.ln2.gain.as_slice()),
            ("ln2.bias", self.ln2.bias.as_slice()),
        ]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [T])> {
        let mut out = vec![
            ("w_q", self.w_q.data_mut()),
            ("w_k", self.w_k.data_mut()),
            ("w_v", self.w_v.data_mut()),
            ("rel_k", self.rel_k.data_mut()),
            ("rel_v", self.rel_v.data_mut()),
        ];
        if let (Some(w1), Some(b1)) = (&mut self.ff.w1, &mut self.ff.b1) {
            out.push(("ff.w1", w1.data_mut()));
            out.push(("ff.b1", b1.as_mut_slice()));
        }
        out.extend([
            ("ff.w2", self.ff.w2.data_mut()),
            ("ff.b2", self.ff.b2.as_mut_slice()),
            ("ln1.gain", self.ln1.gain.as_mut_slice()),
            ("ln1.bias", self.ln1.bias.as_mut_slice()),
            ("ln2.gain", self.ln2.gain.as_mut_slice()),
            ("ln2.bias", self.ln2.bias.as_mut_slice()),
        ]);
        out
    }

    /// A parameter-shaped value with every entry zero (gradient accumulator).
    pub fn zeros_like(&self) -> Self {
        let mut p = self.clone();
        for (_, t) in p.tensors_mut() {
            t.fill(T::zero());
        }
        p
    }

    pub fn cast<U: Real>(&self) -> RatLayerParams<U> {
        let v = |x: &[T]| {
            x.iter()
                .map(|&a| U::from_f64(a.to_f64()))
                .collect::<Vec<U>>()
        };
        RatLayerParams {
            heads: self.heads,
            w_q: self.w_q.cast(),
            w_k: self.w_k.cast(),
            w_v: self.w_v.cast(),
            rel_k: self.rel_k.cast(),
            rel_v: self.rel_v.cast(),
            ff: FeedForwardParams {
                w1: self.ff.w1.as_ref().map(Matrix::cast),
                b1: self.ff.b1.as_deref().map(v),
                w2: self.ff.w2.cast(),
                b2: v(&self.ff.b2),
            },
            ln1: LayerNormParams {
                gain: v(&self.ln1.gain),
                bias: v(&self.ln1.bias),
            },
            ln2: LayerNormParams {
                gain: v(&self.ln2.gain),
                bias: v(&self.ln2.bias),
            },
            eps: self.eps,
        }
    }
}

fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, fan_in: usize) -> Matrix<f64> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-bound..bound))
        .collect();
    Matrix::from_vec(rows, cols, data)
}

/// Draws one layer's weights. Biases start at zero, layer-norm gains at one
/// and the `None` relation rows at zero.
pub fn init_layer(
    rng: &mut ChaCha8Rng,
    d_x: usize,
    heads: usize,
    d_ff: usize,
    vocab: usize,
    form: FeedForwardForm,
    eps: f64,
) -> RatLayerParams<f64> {
    let d_z = d_x;
    let dh = d_z / heads;
    let w_q = uniform_matrix(rng, d_x, d_z, d_x);
    let w_k = uniform_matrix(rng, d_x, d_z, d_x);
    let w_v = uniform_matrix(rng, d_x, d_z, d_x);
    let mut rel_k = uniform_matrix(rng, vocab, dh, dh);
    let mut rel_v = uniform_matrix(rng, vocab, dh, dh);
    rel_k.row_mut(0).fill(0.0);
    rel_v.row_mut(0).fill(0.0);
    let ff = match form {
        FeedForwardForm::TwoLayer => FeedForwardParams {
            w1: Some(uniform_matrix(rng, d_x, d_ff, d_x)),
            b1: Some(vec![0.0; d_ff]),
            w2: uniform_matrix(rng, d_ff, d_x, d_ff),
            b2: vec![0.0; d_x],
        },
        FeedForwardForm::SingleProjection => FeedForwardParams {
            w1: None,
            b1: None,
            w2: uniform_matrix(rng, d_x, d_x, d_x),
            b2: vec![0.0; d_x],
        },
    };
    let ln = || LayerNormParams {
        gain: vec![1.0; d_x],
        bias: vec![0.0; d_x],
    };
    RatLayerParams {
        heads,
        w_q,
        w_k,
        w_v,
        rel_k,
        rel_v,
        ff,
        ln1: ln(),
        ln2: ln(),
        eps,
    }
}

/// Parameters of both encoder streams plus the word lookup table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams<T = f64> {
    pub config: EncoderConfig,
    pub embedding: WordEmbedding,
    pub link_layers: Vec<RatLayerParams<T>>,
    pub rw_layers: Vec<RatLayerParams<T>>,
}

impl<T: Real> EncoderParams<T> {
    pub fn cast<U: Real>(&self) -> EncoderParams<U> {
        EncoderParams {
            config: self.config.clone(),
            embedding: self.embedding.clone(),
            link_layers: self.link_layers.iter().map(RatLayerParams::cast).collect(),
            rw_layers: self.rw_layers.iter().map(RatLayerParams::cast).collect(),
        }
    }
}

/// Deterministic initialization from `config.seed`.
pub fn init_params(config: &EncoderConfig) -> Result<EncoderParams<f64>, EncoderError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut layer = |vocab| {
        init_layer(
            &mut rng,
            config.d_x,
            config.heads,
            config.ff_width(),
            vocab,
            config.feed_forward,
            config.layer_norm_eps,
        )
    };
    let link_layers = (0..config.layers_link)
        .map(|_| layer(config.link_vocab))
        .collect();
    let rw_layers = (0..config.layers_rw)
        .map(|_| layer(config.rw_vocab))
        .collect();
    Ok(EncoderParams {
        config: config.clone(),
        embedding: WordEmbedding {
            dim: config.d_x,
            seed: config.seed,
        },
        link_layers,
        rw_layers,
    })
}
