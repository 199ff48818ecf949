//! Longest common subsequence with a leftmost tie-break.

use super::MatchPolicy;

/// Suffix table: `table[i][j]` is the LCS length of `a[i..]` and `b[j..]`.
fn suffix_table(a: &[String], b: &[String]) -> Vec<Vec<usize>> {
    let (n, m) = (a.len(), b.len());
    let mut table = vec![vec![0usize; m + 1]; n + 1];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            table[i][j] = if a[i] == b[j] {
                table[i + 1][j + 1] + 1
            } else {
                table[i + 1][j].max(table[i][j + 1])
            };
        }
    }
    table
}

/// Maximal alignment between `a` and `b` under `policy`.
///
/// Among all maximal alignments the lexicographically smallest list of
/// `(index_in_a, index_in_b)` pairs is returned.
pub fn lcs(a: &[String], b: &[String], policy: &MatchPolicy) -> Vec<(usize, usize)> {
    let a = policy.normalize_all(a);
    let b = policy.normalize_all(b);
    let table = suffix_table(&a, &b);

    let mut pairs = Vec::with_capacity(table[0][0]);
    let (mut i, mut j) = (0, 0);
    while table[i][j] > 0 {
        let need = table[i][j];
        // smallest feasible next pair: minimal row first, then minimal column
        let next = (i..a.len()).find_map(|ii| {
            (j..b.len())
                .find(|&jj| a[ii] == b[jj] && table[ii + 1][jj + 1] + 1 == need)
                .map(|jj| (ii, jj))
        });
        let (ii, jj) = next.expect("suffix table guarantees a feasible pair");
        pairs.push((ii, jj));
        i = ii + 1;
        j = jj + 1;
    }
    pairs
}

/// LCS length only.
pub fn lcs_len(a: &[String], b: &[String], policy: &MatchPolicy) -> usize {
    let a = policy.normalize_all(a);
    let b = policy.normalize_all(b);
    let (n, m) = (a.len(), b.len());
    let mut prev = vec![0usize; m + 1];
    let mut cur = vec![0usize; m + 1];
    for i in 0..n {
        for j in 0..m {
            cur[j + 1] = if a[i] == b[j] {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m]
}
