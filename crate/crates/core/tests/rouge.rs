mod common;

use common::{brute_force_lcs_len, seq};
use proptest::prelude::*;
use qurg_core::rouge_eval::{corpus_rouge, ngram_overlap, rouge_l, rouge_n, RougeError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Multiset intersection by repeatedly removing one matching reference n-gram.
fn brute_force_matches(cand: &[String], reference: &[String], n: usize) -> usize {
    let grams = |t: &[String]| -> Vec<Vec<String>> {
        if t.len() < n {
            return Vec::new();
        }
        (0..=t.len() - n).map(|i| t[i..i + n].to_vec()).collect()
    };
    let mut pool = grams(reference);
    let mut matched = 0;
    for g in grams(cand) {
        if let Some(k) = pool.iter().position(|r| *r == g) {
            pool.swap_remove(k);
            matched += 1;
        }
    }
    matched
}

fn random_tokens(rng: &mut ChaCha8Rng) -> Vec<String> {
    let len = rng.random_range(0..=8);
    (0..len)
        .map(|_| ["a", "b", "c", "A"][rng.random_range(0..4)].to_string())
        .collect()
}

#[test]
fn overlap_counts_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..500 {
        let c = random_tokens(&mut rng);
        let r = random_tokens(&mut rng);
        let (cl, rl): (Vec<String>, Vec<String>) = (
            c.iter().map(|t| t.to_lowercase()).collect(),
            r.iter().map(|t| t.to_lowercase()).collect(),
        );
        for n in 1..=2 {
            let (matched, ct, rt) = ngram_overlap(&c, &r, n).unwrap();
            assert_eq!(
                matched,
                brute_force_matches(&cl, &rl, n),
                "{c:?} / {r:?} n={n}"
            );
            assert_eq!(ct, cl.len().saturating_sub(n - 1));
            assert_eq!(rt, rl.len().saturating_sub(n - 1));
        }
        let l = rouge_l(&c, &r);
        let ell = brute_force_lcs_len(&cl, &rl);
        let expected_p = if cl.is_empty() {
            0.0
        } else {
            ell as f64 / cl.len() as f64
        };
        assert_eq!(l.precision, expected_p);
    }
}

#[test]
fn hand_scored_examples() {
    let s = rouge_n(&seq("a b"), &seq("a c"), 1).unwrap();
    assert_eq!((s.precision, s.recall, s.f1), (0.5, 0.5, 0.5));
    let s = rouge_n(&seq("a b"), &seq("c d"), 2).unwrap();
    assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
    let s = rouge_l(&seq("a b c"), &seq("a c b"));
    assert!((s.f1 - 2.0 / 3.0).abs() < 1e-15);
    assert_eq!(rouge_l(&[], &seq("a")).f1, 0.0);
    assert_eq!(rouge_n(&seq("a"), &seq("a"), 0), Err(RougeError::ZeroOrder));
}

#[test]
fn corpus_is_mean_of_pairs() {
    // pair 1: identical -> 1 everywhere
    // pair 2: "a b" vs "a c": R1 f1 = 0.5, R2 f1 = 0, RL f1 = 0.5
    let pairs = vec![(seq("x y"), seq("x y")), (seq("a b"), seq("a c"))];
    let rep = corpus_rouge(&pairs);
    assert_eq!(rep.pair_count, 2);
    assert_eq!(rep.r1.f1, 0.75);
    assert_eq!(rep.r2.f1, 0.5);
    assert_eq!(rep.rl.f1, 0.75);

    let empty: Vec<(Vec<String>, Vec<String>)> = Vec::new();
    let rep = corpus_rouge(&empty);
    assert_eq!((rep.pair_count, rep.r1.f1, rep.rl.recall), (0, 0.0, 0.0));
}

fn toks() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(
        prop::sample::select(&["a", "b", "c"][..]).prop_map(str::to_string),
        0..8,
    )
}

proptest! {
    #[test]
    fn swapping_arguments_swaps_precision_and_recall(c in toks(), r in toks(), n in 1usize..3) {
        let ab = rouge_n(&c, &r, n).unwrap();
        let ba = rouge_n(&r, &c, n).unwrap();
        prop_assert_eq!(ab.precision, ba.recall);
        prop_assert_eq!(ab.f1, ba.f1);
        let (lab, lba) = (rouge_l(&c, &r), rouge_l(&r, &c));
        prop_assert_eq!(lab.precision, lba.recall);
    }

    #[test]
    fn identity_scores_one(c in prop::collection::vec(prop::sample::select(&["a", "b"][..]).prop_map(str::to_string), 2..8)) {
        for s in [rouge_n(&c, &c, 1).unwrap(), rouge_n(&c, &c, 2).unwrap(), rouge_l(&c, &c)] {
            prop_assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
        }
    }

    #[test]
    fn scores_in_unit_interval(c in toks(), r in toks()) {
        for s in [rouge_n(&c, &r, 1).unwrap(), rouge_n(&c, &r, 2).unwrap(), rouge_l(&c, &r)] {
            for v in [s.precision, s.recall, s.f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
