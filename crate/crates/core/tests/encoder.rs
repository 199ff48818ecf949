mod common;

use common::{flights_schema, seq};
use qurg_core::rat_encoder::gradcheck::{check_layer, check_suite, random_instance};
use qurg_core::rat_encoder::{
    embed_inputs, encode_interaction, init_layer, init_params, rat_layer_forward, run_stack,
    two_stream_encode_traced, vanilla_layer_forward, EncoderConfig, EncoderError, FeedForwardForm,
    Matrix, Precision, RatLayerParams, RelationMatrix, StreamInputs,
};
use qurg_core::rewrite_diff::{
    build_from_interaction, Interaction, MatchPolicy, RewriteEditMatrix, TokenSeq,
};
use qurg_core::schema_link::build_schema_link_matrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

fn random_layer(
    rng: &mut ChaCha8Rng,
    n: usize,
    heads: usize,
    d: usize,
    vocab: usize,
) -> (Matrix, RelationMatrix, RatLayerParams) {
    let form = if rng.random_bool(0.5) {
        FeedForwardForm::TwoLayer
    } else {
        FeedForwardForm::SingleProjection
    };
    let inst = random_instance(rng, n, heads, d, vocab, form);
    (inst.x, inst.relations, inst.params)
}

#[test]
fn zeroed_relation_tables_reduce_to_vanilla() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for k in 0..50 {
        let heads = [1, 2, 4][k % 3];
        let n = rng.random_range(1..=8);
        let (x, rel, params) = random_layer(&mut rng, n, heads, 8, 6);
        let zeroed = params.with_zero_relations();
        let (a, _) = rat_layer_forward(&x, &rel, &zeroed).unwrap();
        let (b, _) = vanilla_layer_forward(&x, &zeroed).unwrap();
        assert!(
            a.max_abs_diff(&b) <= 1e-12,
            "instance {k}: {}",
            a.max_abs_diff(&b)
        );
        // non-zero tables do change the output whenever some relation is set
        if rel.max_id() > 0 && n > 1 {
            let (c, _) = rat_layer_forward(&x, &rel, &params).unwrap();
            assert!(c.max_abs_diff(&b) > 0.0);
        }
    }
}

#[test]
fn forward_commutes_with_permutations() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for k in 0..50 {
        let n = rng.random_range(1..=8);
        let (x, rel, params) = random_layer(&mut rng, n, [1, 2, 4][k % 3], 8, 6);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let (y, trace) = rat_layer_forward(&x, &rel, &params).unwrap();
        let (yp, trace_p) =
            rat_layer_forward(&x.gather_rows(&perm), &rel.gather(&perm), &params).unwrap();
        assert_eq!(yp, y.gather_rows(&perm), "instance {k}");
        for (a, b) in trace.weights.iter().zip(&trace_p.weights) {
            for i in 0..n {
                for j in 0..n {
                    assert_eq!(b.get(i, j), a.get(perm[i], perm[j]));
                }
            }
        }
    }
}

#[test]
fn analytic_gradients_match_finite_differences() {
    let report = check_suite(3, 24, 1e-5).unwrap();
    let names: Vec<&str> = report.per_tensor.iter().map(|(n, _)| n.as_str()).collect();
    for want in [
        "input", "w_q", "w_k", "w_v", "rel_k", "rel_v", "ff.w1", "ff.b1", "ff.w2", "ff.b2",
        "ln1.gain", "ln1.bias", "ln2.gain", "ln2.bias",
    ] {
        assert!(names.contains(&want), "{want} not checked");
    }
    assert!(report.max_relative_error < 1e-4, "{report:?}");
}

#[test]
fn gradient_check_detects_wrong_gradients() {
    // a sanity check on the checker itself: a large step ruins agreement
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let inst = random_instance(&mut rng, 4, 2, 8, 5, FeedForwardForm::TwoLayer);
    assert!(check_layer(&inst, 1e-5).unwrap().max_relative_error < 1e-4);
    assert!(check_layer(&inst, 0.5).unwrap().max_relative_error > 1e-4);
}

/// Two positions, one head, width 2, constant attention scores.
#[test]
fn two_position_layer_by_hand() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let eps = 1e-5;
    let mut p = init_layer(&mut rng, 2, 1, 2, 2, FeedForwardForm::SingleProjection, eps);
    p.w_q = Matrix::zeros(2, 2);
    p.w_k = Matrix::zeros(2, 2);
    p.w_v = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
    p.rel_k = Matrix::from_rows(&[vec![0.0, 0.0], vec![5.0, -3.0]]);
    p.rel_v = Matrix::from_rows(&[vec![0.0, 0.0], vec![1.0, -1.0]]);
    p.ff.w2 = Matrix::zeros(2, 2);
    let x = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
    let rel = RelationMatrix::new(2, vec![0, 1, 0, 0]);

    // queries are zero, so every score is zero and the weights are 1/2;
    // z0 = ([1,0] + [0,1] + [1,-1]) / 2 = [1, 0], z1 = ([1,0] + [0,1]) / 2
    // x + z = [[2, 0], [0.5, 1.5]]; layer norm of [m+s, m-s] is [s, -s]/sqrt(s^2+eps)
    let a0 = 1.0 / (1.0f64 + eps).sqrt();
    let a1 = 0.5 / (0.25f64 + eps).sqrt();
    // the feed-forward output is zero, so the second norm sees [a, -a] again
    let y0 = a0 / (a0 * a0 + eps).sqrt();
    let y1 = a1 / (a1 * a1 + eps).sqrt();
    let expected = [[y0, -y0], [-y1, y1]];

    let (y, trace) = rat_layer_forward(&x, &rel, &p).unwrap();
    assert_eq!(trace.weights[0].data(), &[0.5, 0.5, 0.5, 0.5]);
    assert!((trace.z.get(0, 0) - 1.0).abs() < 1e-15 && trace.z.get(0, 1).abs() < 1e-15);
    for (i, row) in expected.iter().enumerate() {
        for (c, want) in row.iter().enumerate() {
            assert!((y.get(i, c) - want).abs() < 1e-12, "({i},{c})");
        }
    }
}

/// Scalar reimplementation with naive summation order.
fn naive_layer(x: &Matrix, rel: &RelationMatrix, p: &RatLayerParams) -> Vec<Vec<f64>> {
    let (n, d) = x.shape();
    let dh = d / p.heads;
    let proj = |w: &Matrix| -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| {
                (0..d)
                    .map(|c| (0..d).map(|k| x.get(i, k) * w.get(k, c)).sum())
                    .collect()
            })
            .collect()
    };
    let (q, k, v) = (proj(&p.w_q), proj(&p.w_k), proj(&p.w_v));
    let mut h1 = vec![vec![0.0; d]; n];
    for h in 0..p.heads {
        for i in 0..n {
            let e: Vec<f64> = (0..n)
                .map(|j| {
                    let r = rel.get(i, j);
                    (0..dh)
                        .map(|c| q[i][h * dh + c] * (k[j][h * dh + c] + p.rel_k.get(r, c)))
                        .sum::<f64>()
                        / (dh as f64).sqrt()
                })
                .collect();
            let m = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = e.iter().map(|s| (s - m).exp()).sum();
            for c in 0..dh {
                let s: f64 = (0..n)
                    .map(|j| {
                        (e[j] - m).exp() / z * (v[j][h * dh + c] + p.rel_v.get(rel.get(i, j), c))
                    })
                    .sum();
                h1[i][h * dh + c] = x.get(i, h * dh + c) + s;
            }
        }
    }
    let norm = |row: &[f64], g: &[f64], b: &[f64]| -> Vec<f64> {
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / d as f64;
        row.iter()
            .enumerate()
            .map(|(c, a)| g[c] * (a - mean) / (var + p.eps).sqrt() + b[c])
            .collect()
    };
    h1.iter()
        .map(|row| {
            let yt = norm(row, &p.ln1.gain, &p.ln1.bias);
            let hidden: Vec<f64> = match (&p.ff.w1, &p.ff.b1) {
                (Some(w1), Some(b1)) => (0..w1.cols())
                    .map(|c| ((0..d).map(|k| yt[k] * w1.get(k, c)).sum::<f64>() + b1[c]).max(0.0))
                    .collect(),
                _ => yt.iter().map(|a| a.max(0.0)).collect(),
            };
            let out: Vec<f64> = (0..d)
                .map(|c| {
                    yt[c]
                        + (0..hidden.len())
                            .map(|k| hidden[k] * p.ff.w2.get(k, c))
                            .sum::<f64>()
                        + p.ff.b2[c]
                })
                .collect();
            norm(&out, &p.ln2.gain, &p.ln2.bias)
        })
        .collect()
}

#[test]
fn layer_matches_naive_reimplementation() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for k in 0..30 {
        let n = rng.random_range(1..=7);
        let (x, rel, p) = random_layer(&mut rng, n, [1, 2, 4][k % 3], 8, 5);
        let (y, _) = rat_layer_forward(&x, &rel, &p).unwrap();
        let oracle = naive_layer(&x, &rel, &p);
        assert!(y.max_abs_diff(&Matrix::from_rows(&oracle)) < 1e-12);
    }
}

fn random_interaction(rng: &mut ChaCha8Rng) -> (Interaction, TokenSeq) {
    const WORDS: &[&str] = &[
        "show", "city", "cities", "name", "flight", "number", "the", "most", "id", "which",
    ];
    let mut words = |lo: usize, hi: usize| {
        let len = rng.random_range(lo..=hi);
        TokenSeq::new((0..len).map(|_| WORDS[rng.random_range(0..WORDS.len())].to_string()))
            .unwrap()
    };
    let turns: Vec<TokenSeq> = (0..3).map(|_| words(0, 4)).collect();
    let question = words(1, 5);
    let rewrite = words(1, 7);
    let count = rng.random_range(0..=3);
    (
        Interaction::new(turns[..count].to_vec(), question, None).unwrap(),
        rewrite,
    )
}

#[test]
fn utterance_rows_sum_both_streams_schema_rows_come_from_linking() {
    let schema = flights_schema();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for k in 0..50 {
        let (interaction, rewrite) = random_interaction(&mut rng);
        let context = interaction.flattened_context();
        let link = build_schema_link_matrix(
            &interaction.question,
            &context,
            &schema,
            &MatchPolicy::default(),
        );
        let rw = build_from_interaction(&interaction, &rewrite, &MatchPolicy::default()).unwrap();
        let params = init_params(&EncoderConfig {
            seed: k,
            ..EncoderConfig::tiny()
        })
        .unwrap();
        let out = encode_interaction(&interaction, &schema, &link, &rw, &params).unwrap();
        let nu = interaction.question.len() + context.len();
        let diff = out.h_final.row_slice(0, nu);
        for i in 0..nu {
            for c in 0..diff.cols() {
                let d = out.h_final.get(i, c) - out.h_rw.get(i, c) - out.h_link.get(i, c);
                assert!(d.abs() <= 1e-12);
            }
        }
        assert_eq!(
            out.h_final.row_slice(nu, out.h_final.rows()),
            out.h_link.row_slice(nu, out.h_link.rows())
        );
        assert_eq!(out.h_final.rows(), nu + schema.element_count());
    }
}

#[test]
fn all_none_rewrite_stream_is_a_vanilla_stack() {
    let schema = flights_schema();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for k in 0..10 {
        let (interaction, _) = random_interaction(&mut rng);
        let context = interaction.flattened_context();
        let link = build_schema_link_matrix(
            &interaction.question,
            &context,
            &schema,
            &MatchPolicy::default(),
        );
        let rw = RewriteEditMatrix::empty(context.clone(), interaction.question.clone());
        let params = init_params(&EncoderConfig {
            seed: k,
            ..EncoderConfig::tiny()
        })
        .unwrap();
        let emb = embed_inputs(&interaction, &schema, &params.embedding).unwrap();
        let inputs = StreamInputs {
            question: &emb.question,
            context: &emb.context,
            schema: &emb.schema,
            layout: &emb.layout,
        };
        let (out, traces) = two_stream_encode_traced(inputs, &link, &rw, &params, true).unwrap();
        let traces = traces.unwrap();
        assert_eq!(traces.link.len(), params.link_layers.len());
        assert_eq!(traces.rw.len(), params.rw_layers.len());

        let mut h = Matrix::vstack(&[&emb.question, &emb.context]);
        for layer in &params.rw_layers {
            h = vanilla_layer_forward(&h, layer).unwrap().0;
        }
        assert_eq!(out.h_rw, h);
        let n = h.rows();
        let none = RelationMatrix::none(n);
        assert_eq!(
            run_stack(
                &Matrix::vstack(&[&emb.question, &emb.context]),
                &none,
                &params.rw_layers,
                None
            )
            .unwrap(),
            h
        );
    }
}

#[test]
fn encoding_is_deterministic_and_thread_independent() {
    let schema = flights_schema();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let items: Vec<_> = (0..16).map(|_| random_interaction(&mut rng)).collect();
    let params = init_params(&EncoderConfig {
        seed: 42,
        ..EncoderConfig::tiny()
    })
    .unwrap();
    let encode = |(interaction, rewrite): &(Interaction, TokenSeq)| {
        let context = interaction.flattened_context();
        let link = build_schema_link_matrix(
            &interaction.question,
            &context,
            &schema,
            &MatchPolicy::default(),
        );
        let rw = build_from_interaction(interaction, rewrite, &MatchPolicy::default()).unwrap();
        encode_interaction(interaction, &schema, &link, &rw, &params).unwrap()
    };
    let sequential: Vec<_> = items.iter().map(encode).collect();
    let parallel: Vec<_> = items.par_iter().map(encode).collect();
    assert_eq!(sequential, parallel);
    let again = init_params(&EncoderConfig {
        seed: 42,
        ..EncoderConfig::tiny()
    })
    .unwrap();
    assert_eq!(again, params);
}

#[test]
fn single_precision_tracks_double() {
    let schema = flights_schema();
    let interaction = Interaction::new(
        vec![seq("show all cities")],
        seq("which one has the most flights ?"),
        None,
    )
    .unwrap();
    let context = interaction.flattened_context();
    let link = build_schema_link_matrix(
        &interaction.question,
        &context,
        &schema,
        &MatchPolicy::default(),
    );
    let rw = RewriteEditMatrix::empty(context, interaction.question.clone());
    let params = init_params(&EncoderConfig::tiny()).unwrap();
    let mut single = params.clone();
    single.config.precision = Precision::Single;
    let a = encode_interaction(&interaction, &schema, &link, &rw, &params).unwrap();
    let b = encode_interaction(&interaction, &schema, &link, &rw, &single).unwrap();
    assert!(a.h_final.max_abs_diff(&b.h_final) < 1e-3);
}

#[test]
fn mismatched_matrix_is_rejected() {
    let schema = flights_schema();
    let interaction =
        Interaction::new(vec![seq("show all cities")], seq("which one ?"), None).unwrap();
    let link = build_schema_link_matrix(
        &interaction.question,
        &interaction.flattened_context(),
        &schema,
        &MatchPolicy::default(),
    );
    let wrong = RewriteEditMatrix::empty(seq("a b"), interaction.question.clone());
    let params = init_params(&EncoderConfig::tiny()).unwrap();
    let err = encode_interaction(&interaction, &schema, &link, &wrong, &params).unwrap_err();
    assert!(matches!(err, EncoderError::Layout(_)));
}
