#![allow(dead_code)]

use std::collections::BTreeSet;

use qurg_core::rewrite_diff::{Interaction, TokenSeq};
use qurg_core::schema_link::{Column, ColumnType, Schema};

pub fn seq(text: &str) -> TokenSeq {
    TokenSeq::from_words(text)
}

/// The worked example: "Which one has the most?" rewritten to
/// "Which city has the most arriving flights?".
pub fn figure_two() -> (Interaction, TokenSeq) {
    let interaction = Interaction::new(
        vec![
            seq("show all cities ."),
            seq("list the arriving flights for each"),
        ],
        seq("which one has the most ?"),
        Some(seq("which city has the most arriving flights ?")),
    )
    .unwrap();
    let rewrite = interaction.gold_rewrite.clone().unwrap();
    (interaction, rewrite)
}

pub fn flights_schema() -> Schema {
    Schema::new(
        vec![seq("city"), seq("flights")],
        vec![
            Column {
                name: seq("city name"),
                table: 0,
                col_type: ColumnType::Text,
            },
            Column {
                name: seq("name"),
                table: 0,
                col_type: ColumnType::Text,
            },
            Column {
                name: seq("flight number"),
                table: 1,
                col_type: ColumnType::Number,
            },
            Column {
                name: seq("city id"),
                table: 1,
                col_type: ColumnType::Number,
            },
        ],
        BTreeSet::from([0]),
        BTreeSet::from([(3, 0)]),
    )
    .unwrap()
}

/// Length of the longest common subsequence by trying every subset of the
/// shorter sequence, longest first.
pub fn brute_force_lcs_len(a: &[String], b: &[String]) -> usize {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let mut best = 0;
    for mask in 0u32..(1 << short.len()) {
        let size = mask.count_ones() as usize;
        if size <= best {
            continue;
        }
        let picked: Vec<&String> = (0..short.len())
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| &short[i])
            .collect();
        let mut it = long.iter();
        if picked.iter().all(|p| it.any(|t| t == *p)) {
            best = size;
        }
    }
    best
}
