//! Central finite-difference checks of [`layer_backward`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::backward::layer_backward;
use super::layer::{rat_layer_forward, RelationMatrix};
use super::params::{init_layer, FeedForwardForm, RatLayerParams};
use super::tensor::Matrix;
use super::EncoderError;

/// Smallest magnitude used in the relative-error denominator.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-5;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR)
}

/// A random layer with perturbed layer-norm parameters and non-zero relation rows.
#[derive(Debug, Clone)]
pub struct GradInstance {
    pub x: Matrix,
    pub relations: RelationMatrix,
    pub params: RatLayerParams,
}

pub fn random_instance(
    rng: &mut ChaCha8Rng,
    n: usize,
    heads: usize,
    d_x: usize,
    vocab: usize,
    form: FeedForwardForm,
) -> GradInstance {
    let mut params = init_layer(rng, d_x, heads, 2 * d_x, vocab, form, 1e-5);
    // move away from gain = 1, bias = 0, where a sum-of-squares loss is flat
    for v in params.ln1.gain.iter_mut().chain(params.ln2.gain.iter_mut()) {
        *v = rng.random_range(0.5..1.5);
    }
    for v in params.ln1.bias.iter_mut().chain(params.ln2.bias.iter_mut()) {
        *v = rng.random_range(-0.5..0.5);
    }
    for b in params
        .ff
        .b1
        .iter_mut()
        .flatten()
        .chain(params.ff.b2.iter_mut())
    {
        *b = rng.random_range(-0.1..0.1);
    }
    let x = Matrix::from_vec(
        n,
        d_x,
        (0..n * d_x).map(|_| rng.random_range(-1.0..1.0)).collect(),
    );
    let ids = (0..n * n).map(|_| rng.random_range(0..vocab)).collect();
    GradInstance {
        x,
        relations: RelationMatrix::new(n, ids),
        params,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Worst relative error per tensor, `input` first.
    pub per_tensor: Vec<(String, f64)>,
    pub checked_entries: usize,
}

fn loss(
    x: &Matrix,
    relations: &RelationMatrix,
    params: &RatLayerParams,
) -> Result<f64, EncoderError> {
    let (y, _) = rat_layer_forward(x, relations, params)?;
    Ok(y.data().iter().map(|v| v * v).sum())
}

/// Compares analytic gradients of `sum(Y²)` with central differences.
pub fn check_layer(instance: &GradInstance, step: f64) -> Result<GradCheckReport, EncoderError> {
    let GradInstance {
        x,
        relations,
        params,
    } = instance;
    let (y, trace) = rat_layer_forward(x, relations, params)?;
    let upstream = y.scale(2.0);
    let grads = layer_backward(&upstream, &trace, x, Some(relations), params)?;

    let mut per_tensor = Vec::new();
    let mut checked = 0;

    let mut worst = 0.0f64;
    let mut xp = x.clone();
    for idx in 0..x.data().len() {
        let orig = xp.data()[idx];
        xp.data_mut()[idx] = orig + step;
        let plus = loss(&xp, relations, params)?;
        xp.data_mut()[idx] = orig - step;
        let minus = loss(&xp, relations, params)?;
        xp.data_mut()[idx] = orig;
        worst = worst.max(relative_error(
            grads.input.data()[idx],
            (plus - minus) / (2.0 * step),
        ));
        checked += 1;
    }
    per_tensor.push(("input".to_string(), worst));

    let analytic: Vec<(&'static str, Vec<f64>)> = grads
        .params
        .tensors()
        .into_iter()
        .map(|(name, t)| (name, t.to_vec()))
        .collect();
    let mut probe = params.clone();
    for (t_idx, (name, analytic_t)) in analytic.iter().enumerate() {
        let mut worst = 0.0f64;
        for idx in 0..analytic_t.len() {
            let orig = probe.tensors()[t_idx].1[idx];
            probe.tensors_mut()[t_idx].1[idx] = orig + step;
            let plus = loss(x, relations, &probe)?;
            probe.tensors_mut()[t_idx].1[idx] = orig - step;
            let minus = loss(x, relations, &probe)?;
            probe.tensors_mut()[t_idx].1[idx] = orig;
            worst = worst.max(relative_error(
                analytic_t[idx],
                (plus - minus) / (2.0 * step),
            ));
            checked += 1;
        }
        per_tensor.push((name.to_string(), worst));
    }

    let max_relative_error = per_tensor.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    Ok(GradCheckReport {
        max_relative_error,
        per_tensor,
        checked_entries: checked,
    })
}

/// Runs `count` random instances with `n ≤ 6`, two heads and width 8.
pub fn check_suite(seed: u64, count: usize, step: f64) -> Result<GradCheckReport, EncoderError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = GradCheckReport {
        max_relative_error: 0.0,
        per_tensor: Vec::new(),
        checked_entries: 0,
    };
    for k in 0..count {
        let n = rng.random_range(1..=6);
        let form = if k % 4 == 3 {
            FeedForwardForm::SingleProjection
        } else {
            FeedForwardForm::TwoLayer
        };
        let inst = random_instance(&mut rng, n, 2, 8, 5, form);
        let report = check_layer(&inst, step)?;
        total.checked_entries += report.checked_entries;
        for (name, err) in report.per_tensor {
            match total.per_tensor.iter_mut().find(|(n, _)| *n == name) {
                Some(entry) => entry.1 = entry.1.max(err),
                None => total.per_tensor.push((name, err)),
            }
        }
        total.max_relative_error = total.max_relative_error.max(report.max_relative_error);
    }
    Ok(total)
}
