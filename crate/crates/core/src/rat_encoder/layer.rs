//! Forward pass of one (relation-aware) transformer layer.

use serde::Serialize;

use super::params::RatLayerParams;
use super::tensor::{ordered_sum, Matrix, Real};
use super::EncoderError;

/// Dense square matrix of relation ids (0 = `None`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RelationMatrix {
    n: usize,
    ids: Vec<usize>,
}

impl RelationMatrix {
    pub fn new(n: usize, ids: Vec<usize>) -> Self {
        assert_eq!(ids.len(), n * n, "relation matrix must be square");
        Self { n, ids }
    }

    pub fn none(n: usize) -> Self {
        Self {
            n,
            ids: vec![0; n * n],
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> usize {
        self.ids[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, id: usize) {
        self.ids[i * self.n + j] = id;
    }

    pub fn max_id(&self) -> usize {
        self.ids.iter().copied().max().unwrap_or(0)
    }

    /// Entry `(i, j)` of the result is entry `(perm[i], perm[j])` of `self`.
    pub fn gather(&self, perm: &[usize]) -> RelationMatrix {
        let n = perm.len();
        let mut ids = Vec::with_capacity(n * n);
        for &pi in perm {
            for &pj in perm {
                ids.push(self.get(pi, pj));
            }
        }
        RelationMatrix { n, ids }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LayerNormCache<T> {
    pub xhat: Matrix<T>,
    pub inv_std: Vec<T>,
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LayerCache<T> {
    pub input: Matrix<T>,
    pub relations: Option<RelationMatrix>,
    pub q: Matrix<T>,
    pub k: Matrix<T>,
    pub v: Matrix<T>,
    pub ln1: LayerNormCache<T>,
    pub y_tilde: Matrix<T>,
    pub ff_pre: Option<Matrix<T>>,
    pub ff_act: Matrix<T>,
    pub ln2: LayerNormCache<T>,
}

/// Per-layer attention record: scores `e`, weights `α` per head, the
/// concatenated head outputs `z` and the layer output `y`.
#[derive(Debug, Clone, Serialize)]
pub struct AttentionTrace<T = f64> {
    pub scores: Vec<Matrix<T>>,
    pub weights: Vec<Matrix<T>>,
    pub z: Matrix<T>,
    pub y: Matrix<T>,
    #[serde(skip)]
    pub(crate) cache: LayerCache<T>,
}

fn layer_norm<T: Real>(
    v: &Matrix<T>,
    gain: &[T],
    bias: &[T],
    eps: f64,
) -> (Matrix<T>, LayerNormCache<T>) {
    let (n, d) = v.shape();
    let dt = T::from_f64(d as f64);
    let mut xhat = Matrix::zeros(n, d);
    let mut inv_std = Vec::with_capacity(n);
    let mut out = Matrix::zeros(n, d);
    for i in 0..n {
        let row = v.row(i);
        let mean = row.iter().fold(T::zero(), |s, &a| s + a) / dt;
        let var = row
            .iter()
            .fold(T::zero(), |s, &a| s + (a - mean) * (a - mean))
            / dt;
        let inv = (var + T::from_f64(eps)).sqrt().recip();
        inv_std.push(inv);
        for c in 0..d {
            let h = (row[c] - mean) * inv;
            xhat.set(i, c, h);
            out.set(i, c, gain[c] * h + bias[c]);
        }
    }
    (out, LayerNormCache { xhat, inv_std })
}

fn check_input<T: Real>(x: &Matrix<T>, params: &RatLayerParams<T>) -> Result<(), EncoderError> {
    if x.rows() == 0 {
        return Err(EncoderError::DimensionMismatch {
            what: "input rows",
            expected: 1,
            got: 0,
        });
    }
    if x.cols() != params.d_x() {
        return Err(EncoderError::DimensionMismatch {
            what: "input width",
            expected: params.d_x(),
            got: x.cols(),
        });
    }
    if !x.is_finite() {
        return Err(EncoderError::NonFinite);
    }
    Ok(())
}

fn forward<T: Real>(
    x: &Matrix<T>,
    relations: Option<&RelationMatrix>,
    params: &RatLayerParams<T>,
) -> Result<(Matrix<T>, AttentionTrace<T>), EncoderError> {
    check_input(x, params)?;
    let n = x.rows();
    if let Some(r) = relations {
        if r.len() != n {
            return Err(EncoderError::DimensionMismatch {
                what: "relation matrix size",
                expected: n,
                got: r.len(),
            });
        }
        if r.max_id() >= params.vocab() {
            return Err(EncoderError::RelationOutOfVocab {
                id: r.max_id(),
                vocab: params.vocab(),
            });
        }
    }

    let dh = params.head_dim();
    let scale = T::from_f64(1.0 / (dh as f64).sqrt());
    let q = x.matmul(&params.w_q);
    let k = x.matmul(&params.w_k);
    let v = x.matmul(&params.w_v);

    let mut z = Matrix::zeros(n, params.d_z());
    let mut scores = Vec::with_capacity(params.heads);
    let mut weights = Vec::with_capacity(params.heads);
    for h in 0..params.heads {
        let block = h * dh..(h + 1) * dh;
        let mut e = Matrix::zeros(n, n);
        for i in 0..n {
            let qi = &q.row(i)[block.clone()];
            for j in 0..n {
                let kj = &k.row(j)[block.clone()];
                let dot = match relations {
                    Some(r) => {
                        let rk = params.rel_k.row(r.get(i, j));
                        (0..dh).fold(T::zero(), |s, c| s + qi[c] * (kj[c] + rk[c]))
                    }
                    None => (0..dh).fold(T::zero(), |s, c| s + qi[c] * kj[c]),
                };
                e.set(i, j, dot * scale);
            }
        }

        let mut alpha = Matrix::zeros(n, n);
        for i in 0..n {
            let row = e.row(i);
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let exps: Vec<T> = row.iter().map(|&s| (s - max).exp()).collect();
            let denom = ordered_sum(exps.clone());
            for (j, ex) in exps.into_iter().enumerate() {
                alpha.set(i, j, ex / denom);
            }
        }

        for i in 0..n {
            for c in 0..dh {
                let terms = (0..n)
                    .map(|j| {
                        let vj = v.get(j, h * dh + c);
                        let val = match relations {
                            Some(r) => vj + params.rel_v.get(r.get(i, j), c),
                            None => vj,
                        };
                        alpha.get(i, j) * val
                    })
                    .collect();
                z.set(i, h * dh + c, ordered_sum(terms));
            }
        }
        scores.push(e);
        weights.push(alpha);
    }

    let (y_tilde, ln1) = layer_norm(&x.add(&z), &params.ln1.gain, &params.ln1.bias, params.eps);

    let (ff_pre, ff_act) = match (&params.ff.w1, &params.ff.b1) {
        (Some(w1), Some(b1)) => {
            let mut pre = y_tilde.matmul(w1);
            pre.add_row_vector(b1);
            let act = pre.map(|a| a.max(T::zero()));
            (Some(pre), act)
        }
        _ => (None, y_tilde.map(|a| a.max(T::zero()))),
    };
    let mut ff_out = ff_act.matmul(&params.ff.w2);
    ff_out.add_row_vector(&params.ff.b2);

    let (y, ln2) = layer_norm(
        &y_tilde.add(&ff_out),
        &params.ln2.gain,
        &params.ln2.bias,
        params.eps,
    );

    let cache = LayerCache {
        input: x.clone(),
        relations: relations.cloned(),
        q,
        k,
        v,
        ln1,
        y_tilde,
        ff_pre,
        ff_act,
        ln2,
    };
    let trace = AttentionTrace {
        scores,
        weights,
        z,
        y: y.clone(),
        cache,
    };
    Ok((y, trace))
}

/// Multi-head self-attention, residual layer norm, feed-forward, residual layer norm.
pub fn vanilla_layer_forward<T: Real>(
    x: &Matrix<T>,
    params: &RatLayerParams<T>,
) -> Result<(Matrix<T>, AttentionTrace<T>), EncoderError> {
    forward(x, None, params)
}

/// The vanilla layer with relation embeddings added to keys and values.
pub fn rat_layer_forward<T: Real>(
    x: &Matrix<T>,
    relations: &RelationMatrix,
    params: &RatLayerParams<T>,
) -> Result<(Matrix<T>, AttentionTrace<T>), EncoderError> {
    forward(x, Some(relations), params)
}
