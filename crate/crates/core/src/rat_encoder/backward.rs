//! Analytic gradients of one layer.

use super::layer::{AttentionTrace, LayerNormCache, RelationMatrix};
use super::params::RatLayerParams;
use super::tensor::Matrix;
use super::EncoderError;

/// Gradients of a scalar loss with respect to the layer input and every weight.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradients {
    pub input: Matrix,
    /// Same layout as the layer's parameters.
    pub params: RatLayerParams,
}

/// Returns the input gradient and accumulates into `gain`/`bias` gradients.
fn layer_norm_backward(
    dy: &Matrix,
    cache: &LayerNormCache<f64>,
    gain: &[f64],
    d_gain: &mut [f64],
    d_bias: &mut [f64],
) -> Matrix {
    let (n, d) = dy.shape();
    let mut dv = Matrix::zeros(n, d);
    for i in 0..n {
        let xhat = cache.xhat.row(i);
        let g: Vec<f64> = dy.row(i).iter().zip(gain).map(|(a, b)| a * b).collect();
        for c in 0..d {
            d_gain[c] += dy.get(i, c) * xhat[c];
            d_bias[c] += dy.get(i, c);
        }
        let mean_g = g.iter().sum::<f64>() / d as f64;
        let mean_gx = g.iter().zip(xhat).map(|(a, b)| a * b).sum::<f64>() / d as f64;
        let inv = cache.inv_std[i];
        for c in 0..d {
            dv.set(i, c, inv * (g[c] - mean_g - xhat[c] * mean_gx));
        }
    }
    dv
}

/// Backpropagates `upstream` (dLoss/dY) through the layer that produced `trace`.
///
/// `relations` must be the matrix passed to the forward call, or `None` for
/// a vanilla layer. Relation-embedding gradients are summed over every cell
/// carrying that relation and over all heads.
pub fn layer_backward(
    upstream: &Matrix,
    trace: &AttentionTrace<f64>,
    x: &Matrix,
    relations: Option<&RelationMatrix>,
    params: &RatLayerParams,
) -> Result<LayerGradients, EncoderError> {
    let cache = &trace.cache;
    if cache.input != *x || cache.relations.as_ref() != relations {
        return Err(EncoderError::TraceMismatch);
    }
    if upstream.shape() != trace.y.shape() {
        return Err(EncoderError::DimensionMismatch {
            what: "upstream gradient rows",
            expected: trace.y.rows(),
            got: upstream.rows(),
        });
    }
    let n = x.rows();
    let heads = params.heads;
    let dh = params.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();
    let mut grads = params.zeros_like();

    // second residual + layer norm
    let d_a2 = layer_norm_backward(
        upstream,
        &cache.ln2,
        &params.ln2.gain,
        &mut grads.ln2.gain,
        &mut grads.ln2.bias,
    );
    let mut d_y_tilde = d_a2.clone();

    // feed-forward
    let d_ff_out = &d_a2;
    for (b, s) in grads.ff.b2.iter_mut().zip(d_ff_out.sum_rows()) {
        *b += s;
    }
    grads.ff.w2 = cache.ff_act.t_matmul(d_ff_out);
    let d_act = d_ff_out.matmul_t(&params.ff.w2);
    match (&params.ff.w1, &cache.ff_pre) {
        (Some(w1), Some(pre)) => {
            let mut d_pre = d_act;
            for (g, &p) in d_pre.data_mut().iter_mut().zip(pre.data()) {
                if p <= 0.0 {
                    *g = 0.0;
                }
            }
            grads.ff.b1 = Some(d_pre.sum_rows());
            grads.ff.w1 = Some(cache.y_tilde.t_matmul(&d_pre));
            d_y_tilde.add_assign(&d_pre.matmul_t(w1));
        }
        _ => {
            let mut d_in = d_act;
            for (g, &p) in d_in.data_mut().iter_mut().zip(cache.y_tilde.data()) {
                if p <= 0.0 {
                    *g = 0.0;
                }
            }
            d_y_tilde.add_assign(&d_in);
        }
    }

    // first residual + layer norm
    let d_a1 = layer_norm_backward(
        &d_y_tilde,
        &cache.ln1,
        &params.ln1.gain,
        &mut grads.ln1.gain,
        &mut grads.ln1.bias,
    );
    let mut d_x = d_a1.clone();
    let d_z = &d_a1;

    // attention
    let rel = |i: usize, j: usize| relations.map(|r| r.get(i, j));
    let mut d_q = Matrix::zeros(n, params.d_z());
    let mut d_k = Matrix::zeros(n, params.d_z());
    let mut d_v = Matrix::zeros(n, params.d_z());
    for h in 0..heads {
        let off = h * dh;
        let alpha = &trace.weights[h];
        for i in 0..n {
            let dz_i = &d_z.row(i)[off..off + dh];
            // dα_ij = dz_i · (v_j + r^V_ij)
            let mut d_alpha = vec![0.0; n];
            for j in 0..n {
                let a = alpha.get(i, j);
                let mut s = 0.0;
                for c in 0..dh {
                    let mut val = cache.v.get(j, off + c);
                    if let Some(id) = rel(i, j) {
                        val += params.rel_v.get(id, c);
                        let g = grads.rel_v.get(id, c) + a * dz_i[c];
                        grads.rel_v.set(id, c, g);
                    }
                    s += dz_i[c] * val;
                    let g = d_v.get(j, off + c) + a * dz_i[c];
                    d_v.set(j, off + c, g);
                }
                d_alpha[j] = s;
            }
            let weighted: f64 = (0..n).map(|j| alpha.get(i, j) * d_alpha[j]).sum();
            for j in 0..n {
                let de = alpha.get(i, j) * (d_alpha[j] - weighted) * scale;
                if de == 0.0 {
                    continue;
                }
                for c in 0..dh {
                    let mut key = cache.k.get(j, off + c);
                    let qc = cache.q.get(i, off + c);
                    if let Some(id) = rel(i, j) {
                        key += params.rel_k.get(id, c);
                        let g = grads.rel_k.get(id, c) + de * qc;
                        grads.rel_k.set(id, c, g);
                    }
                    d_q.set(i, off + c, d_q.get(i, off + c) + de * key);
                    d_k.set(j, off + c, d_k.get(j, off + c) + de * qc);
                }
            }
        }
    }
    grads.w_q = x.t_matmul(&d_q);
    grads.w_k = x.t_matmul(&d_k);
    grads.w_v = x.t_matmul(&d_v);
    d_x.add_assign(&d_q.matmul_t(&params.w_q));
    d_x.add_assign(&d_k.matmul_t(&params.w_k));
    d_x.add_assign(&d_v.matmul_t(&params.w_v));

    Ok(LayerGradients {
        input: d_x,
        params: grads,
    })
}
