mod common;

use common::{brute_force_lcs_len, figure_two, seq};
use proptest::prelude::*;
use qurg_core::rewrite_diff::{
    build_from_interaction, build_rewrite_matrix, extract_edit_ops, lcs, lcs_len, tag_edits,
    EditOp, Interaction, MatchPolicy, RewriteRelation, TokenRange, TokenSeq,
};
use qurg_core::rewrite_restore::recover_ops;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn worked_example_ops_and_cells() {
    let (interaction, rewrite) = figure_two();
    let context = interaction.flattened_context();
    let policy = MatchPolicy::default();

    let alignment = lcs(&interaction.question, &rewrite, &policy);
    let aligned: Vec<&str> = alignment
        .iter()
        .map(|&(q, _)| interaction.question[q].as_str())
        .collect();
    assert_eq!(aligned, ["which", "has", "the", "most", "?"]);

    let ops = extract_edit_ops(&interaction.question, &context, &rewrite, &policy);
    let cities = context.iter().position(|t| t == "cities").unwrap();
    let arriving = context.iter().position(|t| t == "arriving").unwrap();
    assert_eq!(
        ops,
        vec![
            EditOp::Substitute {
                context: TokenRange::new(cities, cities + 1),
                question: TokenRange::new(1, 2)
            },
            EditOp::Insert {
                context: TokenRange::new(arriving, arriving + 2),
                anchor: 5
            },
        ]
    );
    assert_eq!(
        &context[ops[1].context_range().indices()],
        ["arriving", "flights"]
    );

    let m = build_from_interaction(&interaction, &rewrite, &policy).unwrap();
    let nc = context.len();
    let expected = vec![
        (cities, nc + 1, RewriteRelation::CqSub),
        (arriving, nc + 5, RewriteRelation::CqIns),
        (arriving + 1, nc + 5, RewriteRelation::CqIns),
        (nc + 1, cities, RewriteRelation::QcSub),
        (nc + 5, arriving, RewriteRelation::QcIns),
        (nc + 5, arriving + 1, RewriteRelation::QcIns),
    ];
    let got: Vec<_> = m.cells().map(|c| (c.i, c.j, c.rel)).collect();
    assert_eq!(got, expected);
}

#[test]
fn worked_example_tags() {
    let (interaction, rewrite) = figure_two();
    let (dels, adds) = tag_edits(&interaction.question, &rewrite, &MatchPolicy::default());
    assert_eq!(
        dels.iter().map(|s| s.range).collect::<Vec<_>>(),
        [TokenRange::new(1, 2)]
    );
    assert_eq!(
        adds.iter().map(|s| s.range).collect::<Vec<_>>(),
        [TokenRange::new(1, 2), TokenRange::new(5, 7)]
    );
}

#[test]
fn identical_rewrite_gives_all_none() {
    let (interaction, _) = figure_two();
    let m = build_from_interaction(&interaction, &interaction.question, &MatchPolicy::default())
        .unwrap();
    assert!(m.is_all_none());
    assert_eq!(
        m.dim(),
        interaction.flattened_context().len() + interaction.question.len()
    );
}

fn random_tokens(rng: &mut ChaCha8Rng, max_len: usize, alphabet: &[&str]) -> Vec<String> {
    let len = rng.random_range(0..=max_len);
    (0..len)
        .map(|_| alphabet[rng.random_range(0..alphabet.len())].to_string())
        .collect()
}

#[test]
fn lcs_length_matches_exhaustive_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let a = random_tokens(&mut rng, 10, &["a", "b", "c", "d"]);
        let b = random_tokens(&mut rng, 10, &["a", "b", "c", "d"]);
        let oracle = brute_force_lcs_len(&a, &b);
        assert_eq!(
            lcs_len(&a, &b, &MatchPolicy::EXACT),
            oracle,
            "{a:?} / {b:?}"
        );
        let pairs = lcs(&a, &b, &MatchPolicy::EXACT);
        assert_eq!(pairs.len(), oracle);
        assert!(pairs.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 < w[1].1));
        assert!(pairs.iter().all(|&(i, j)| a[i] == b[j]));
    }
}

/// Every maximum alignment, as sorted pair lists, by enumeration.
fn all_max_alignments(a: &[String], b: &[String]) -> Vec<Vec<(usize, usize)>> {
    let best = brute_force_lcs_len(a, b);
    let subsets = |n: usize| -> Vec<Vec<usize>> {
        (0u32..(1 << n))
            .filter(|m| m.count_ones() as usize == best)
            .map(|m| (0..n).filter(|i| m >> i & 1 == 1).collect())
            .collect()
    };
    let mut out = Vec::new();
    for ia in subsets(a.len()) {
        for ib in subsets(b.len()) {
            if ia.iter().zip(&ib).all(|(&i, &j)| a[i] == b[j]) {
                out.push(ia.iter().copied().zip(ib.iter().copied()).collect());
            }
        }
    }
    out
}

#[test]
fn lcs_picks_lexicographically_smallest_alignment() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..150 {
        let a = random_tokens(&mut rng, 6, &["a", "b", "c"]);
        let b = random_tokens(&mut rng, 6, &["a", "b", "c"]);
        let smallest = all_max_alignments(&a, &b).into_iter().min().unwrap();
        assert_eq!(lcs(&a, &b, &MatchPolicy::EXACT), smallest, "{a:?} / {b:?}");
    }
}

#[test]
fn plural_stem_aligns_city_and_cities() {
    let a = seq("which city");
    let b = seq("which cities");
    assert_eq!(lcs_len(&a, &b, &MatchPolicy::default()), 2);
    assert_eq!(lcs_len(&a, &b, &MatchPolicy::EXACT), 1);
}

const WORDS: &[&str] = &[
    "a", "b", "c", "d", "city", "cities", "flight", "flights", "?",
];

fn tokens(max: usize, min: usize) -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(
        prop::sample::select(WORDS).prop_map(str::to_string),
        min..=max,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn matrices_are_mirrored_and_block_pure(
        turns in prop::collection::vec(tokens(5, 0), 0..3),
        question in tokens(7, 1),
        rewrite in tokens(9, 0),
    ) {
        let context: Vec<TokenSeq> = turns.into_iter().map(|t| TokenSeq::new(t).unwrap()).collect();
        let interaction = Interaction::new(context, TokenSeq::new(question).unwrap(), None).unwrap();
        let rewrite = TokenSeq::new(rewrite).unwrap();
        let m = build_from_interaction(&interaction, &rewrite, &MatchPolicy::default()).unwrap();
        m.validate().unwrap();
        let nc = m.context_len();
        for cell in m.cells() {
            prop_assert_eq!(m.get(cell.j, cell.i), Some(cell.rel.mirror()));
            prop_assert_eq!(cell.rel.is_question_row(), cell.i >= nc);
            prop_assert_eq!(cell.j >= nc, !cell.rel.is_question_row());
        }
        let ids = m.relation_ids();
        let n = m.dim();
        for i in 0..n {
            for j in 0..n {
                let same_block = (i < nc) == (j < nc);
                if same_block {
                    prop_assert_eq!(ids[i * n + j], 0);
                }
            }
        }
    }

    #[test]
    fn recover_inverts_build(
        turns in prop::collection::vec(tokens(5, 1), 1..3),
        question in tokens(7, 1),
        rewrite in tokens(9, 0),
    ) {
        let context = TokenSeq::concat(&turns.into_iter().map(|t| TokenSeq::new(t).unwrap()).collect::<Vec<_>>());
        let question = TokenSeq::new(question).unwrap();
        let rewrite = TokenSeq::new(rewrite).unwrap();
        let ops = extract_edit_ops(&question, &context, &rewrite, &MatchPolicy::default());
        let m = build_rewrite_matrix(&ops, &context, &question).unwrap();
        // rebuilding from the recovered ops reproduces the same matrix
        let recovered = recover_ops(&m).unwrap();
        let again = build_rewrite_matrix(&recovered, &context, &question).unwrap();
        prop_assert_eq!(again, m);
    }
}
