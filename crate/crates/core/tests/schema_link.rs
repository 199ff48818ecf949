mod common;

use std::collections::BTreeSet;

use common::{figure_two, flights_schema, seq};
use proptest::prelude::*;
use qurg_core::rewrite_diff::{MatchPolicy, TokenSeq};
use qurg_core::schema_link::{
    build_schema_link_matrix, link_stats, Column, ColumnType, Schema, SchemaError,
    SchemaRelation as R,
};

#[test]
fn worked_example_counts_by_hand() {
    // context "show all cities . list the arriving flights for each":
    //   "cities" -> table city, "flights" -> table flights (exact, both directions)
    // structure: 1 primary key, 3 plain memberships, 2 same-table column
    // pairs and one foreign key, each mirrored
    let (interaction, _) = figure_two();
    let schema = flights_schema();
    let m = build_schema_link_matrix(
        &interaction.question,
        &interaction.flattened_context(),
        &schema,
        &MatchPolicy::default(),
    );
    m.validate().unwrap();
    let stats = link_stats(&m);
    let expected = [
        (R::UttTableExact, 2),
        (R::TableUttExact, 2),
        (R::PrimaryKeyOf, 1),
        (R::HasPrimaryKey, 1),
        (R::ColumnBelongsToTable, 3),
        (R::TableHasColumn, 3),
        (R::SameTableColumns, 4),
        (R::ForeignKeyForward, 1),
        (R::ForeignKeyBackward, 1),
    ];
    for r in R::ALL {
        let want = expected.iter().find(|(e, _)| e == r).map_or(0, |(_, n)| *n);
        assert_eq!(stats[r], want, "{r}");
    }
    assert_eq!(stats.values().sum::<usize>(), 18);

    let layout = m.layout();
    let cities = layout.question + 2;
    assert_eq!(m.get(cities, layout.table_pos(0)), Some(R::UttTableExact));
    assert_eq!(m.get(layout.table_pos(0), cities), Some(R::TableUttExact));
    assert_eq!(
        m.get(layout.column_pos(3), layout.column_pos(0)),
        Some(R::ForeignKeyForward)
    );
}

#[test]
fn bigram_claims_both_tokens() {
    let schema = flights_schema();
    let q = seq("show the flight number and name ?");
    let m = build_schema_link_matrix(&q, &TokenSeq::empty(), &schema, &MatchPolicy::default());
    let layout = m.layout();
    let fnum = layout.column_pos(2);
    assert_eq!(m.get(2, fnum), Some(R::UttColumnExact));
    assert_eq!(m.get(3, fnum), Some(R::UttColumnExact));
    assert_eq!(m.get(fnum, 3), Some(R::ColumnUttExact));
    // "flight" is claimed by the bigram, so no table match and no partials
    assert_eq!(m.get(2, layout.table_pos(1)), None);
    for pos in layout.utterance_len()..layout.dim() {
        for t in [2, 3, 5] {
            assert!(!m.get(t, pos).is_some_and(R::is_partial));
        }
    }
    assert_eq!(m.get(5, layout.column_pos(1)), Some(R::UttColumnExact));
}

#[test]
fn partial_match_on_multi_word_names() {
    let schema = flights_schema();
    let m = build_schema_link_matrix(
        &seq("which id ?"),
        &TokenSeq::empty(),
        &schema,
        &MatchPolicy::default(),
    );
    let layout = m.layout();
    assert_eq!(m.get(1, layout.column_pos(3)), Some(R::UttColumnPartial));
    assert_eq!(m.get(layout.column_pos(3), 1), Some(R::ColumnUttPartial));
    assert_eq!(m.cells().filter(|c| c.rel.is_match()).count(), 2);
}

#[test]
fn schema_invariants_enforced() {
    let col = |table| Column {
        name: seq("x"),
        table,
        col_type: ColumnType::Text,
    };
    assert!(matches!(
        Schema::new(
            vec![seq("t")],
            vec![col(1)],
            BTreeSet::new(),
            BTreeSet::new()
        ),
        Err(SchemaError::ColumnTableOutOfRange { .. })
    ));
    assert!(matches!(
        Schema::new(
            vec![seq("t")],
            vec![col(0)],
            BTreeSet::new(),
            BTreeSet::from([(0, 4)])
        ),
        Err(SchemaError::DanglingForeignKey { .. })
    ));
    let ok = Schema::new(
        vec![seq("t")],
        vec![col(0)],
        BTreeSet::new(),
        BTreeSet::new(),
    )
    .unwrap();
    assert!(ok.foreign_keys().is_empty());
}

#[test]
fn all_none_stats() {
    let schema = Schema::new(vec![seq("t")], vec![], BTreeSet::new(), BTreeSet::new()).unwrap();
    let m = build_schema_link_matrix(
        &seq("hello ?"),
        &TokenSeq::empty(),
        &schema,
        &MatchPolicy::default(),
    );
    assert!(link_stats(&m).values().all(|&n| n == 0));
}

const WORDS: &[&str] = &[
    "city", "cities", "name", "flight", "number", "id", "show", "the", "?",
];

proptest! {
    #[test]
    fn mirrored_pure_and_exact_dominant(
        q in prop::collection::vec(prop::sample::select(WORDS), 1..8),
        c in prop::collection::vec(prop::sample::select(WORDS), 0..8),
    ) {
        let q = TokenSeq::new(q.iter().map(|s| s.to_string())).unwrap();
        let c = TokenSeq::new(c.iter().map(|s| s.to_string())).unwrap();
        let m = build_schema_link_matrix(&q, &c, &flights_schema(), &MatchPolicy::default());
        m.validate().unwrap();
        let layout = m.layout();
        let nu = layout.utterance_len();
        for cell in m.cells() {
            prop_assert!(cell.i >= nu || cell.j >= nu, "utterance-utterance cell {:?}", cell);
            prop_assert_eq!(m.get(cell.j, cell.i), Some(cell.rel.mirror()));
        }
        for t in 0..nu {
            let has_exact = (nu..layout.dim()).any(|p| m.get(t, p).is_some_and(|r| r.is_match() && !r.is_partial()));
            let has_partial = (nu..layout.dim()).any(|p| m.get(t, p).is_some_and(R::is_partial));
            prop_assert!(!(has_exact && has_partial));
        }
        prop_assert_eq!(link_stats(&m).values().sum::<usize>(), m.non_none_count());
    }
}
