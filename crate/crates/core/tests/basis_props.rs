mod common;

use std::collections::BTreeMap;

use common::all_raw_tuples;
use proptest::prelude::*;
use taylorattn::basis::{build_basis_family, build_degree_basis, enumerate_index_tuples, taylor_coefficients, tuple_multiplicity};
use taylorattn::combinatorics::binomial;

/// Sorted representatives of all raw tuples, with hit counts (1-based).
fn brute_force(d: usize, p: usize) -> BTreeMap<Vec<usize>, u64> {
    let mut hits = BTreeMap::new();
    for mut t in all_raw_tuples(d, p) {
        t.sort_unstable();
        let t: Vec<usize> = t.into_iter().map(|i| i + 1).collect();
        *hits.entry(t).or_insert(0) += 1;
    }
    hits
}

#[test]
fn enumeration_matches_brute_force_over_grid() {
    for d in 1..=8 {
        for p in 0..=5 {
            let oracle = brute_force(d, p);
            let tuples = enumerate_index_tuples(d, p).unwrap();
            let got: Vec<Vec<usize>> = tuples.iter().map(|t| t.indices().to_vec()).collect();
            // BTreeMap keys are in lexicographic order
            let want: Vec<Vec<usize>> = oracle.keys().cloned().collect();
            assert_eq!(got, want, "d={d} p={p}");
            assert_eq!(got.len() as u128, binomial((d + p - 1) as u64, p as u64).unwrap());
        }
    }
}

#[test]
fn frozen_small_enumeration() {
    let got: Vec<Vec<usize>> = enumerate_index_tuples(2, 3)
        .unwrap()
        .iter()
        .map(|t| t.indices().to_vec())
        .collect();
    assert_eq!(got, vec![vec![1, 1, 1], vec![1, 1, 2], vec![1, 2, 2], vec![2, 2, 2]]);
    // same list from the oracle
    assert_eq!(got, brute_force(2, 3).into_keys().collect::<Vec<_>>());
}

#[test]
fn multiplicities_are_permutation_hit_counts() {
    for d in 1..=8 {
        for p in 0..=5 {
            let b = build_degree_basis(d, p).unwrap();
            let oracle = brute_force(d, p);
            assert_eq!(b.basis_size(), oracle.len());
            for (row, (tuple, hits)) in b.tuples().zip(&oracle) {
                assert_eq!(row.indices(), tuple.as_slice());
                assert_eq!(tuple_multiplicity(&row).unwrap(), *hits);
            }
            let stored: Vec<u64> = b.multiplicities().to_vec();
            assert_eq!(stored, oracle.values().copied().collect::<Vec<_>>(), "d={d} p={p}");
            let total: u128 = stored.iter().map(|&m| m as u128).sum();
            assert_eq!(total, (d as u128).pow(p as u32));
            b.validate().unwrap();
        }
    }
}

#[test]
fn distinct_permutation_counts_by_enumeration() {
    use itertools::Itertools;
    for t in [vec![1usize, 2], vec![1, 1, 1], vec![1, 2, 2], vec![1, 2, 3], vec![1, 1, 2, 3, 3]] {
        let distinct = t.iter().permutations(t.len()).unique().count() as u64;
        let tuple = taylorattn::IndexTuple::new(t.clone()).unwrap();
        assert_eq!(tuple_multiplicity(&tuple).unwrap(), distinct, "{t:?}");
    }
}

#[test]
fn lower_degree_rows_embed_in_higher_degree_rows() {
    for d in 1..=6 {
        for p in 1..=5 {
            let lower = build_degree_basis(d, p - 1).unwrap();
            let upper: Vec<Vec<usize>> = build_degree_basis(d, p)
                .unwrap()
                .tuples()
                .map(|t| t.indices().to_vec())
                .collect();
            for row in lower.tuples() {
                let found = upper.iter().any(|u| {
                    // multiset inclusion of sorted sequences
                    let mut it = u.iter();
                    row.indices().iter().all(|x| it.any(|y| y == x))
                });
                assert!(found, "d={d} p={p} row {:?}", row.indices());
            }
        }
    }
}

#[test]
fn coefficients_decrease_and_fall_below_half_precision() {
    for c in [1.0, 1.5, 2.0, 8.0] {
        let a = taylor_coefficients(8, c);
        assert!(a.windows(2).all(|w| w[1] <= w[0]), "c={c}: {a:?}");
    }
    let a = build_basis_family(64, 5, 8.0).unwrap().taylor_coefficients().to_vec();
    assert!(a[4] < 2f64.powi(-10));
    assert!((a[4] - 1.0 / (24.0 * 4096.0)).abs() < 1e-20);
}

#[test]
fn construction_is_deterministic() {
    assert_eq!(build_basis_family(5, 4, 1.3).unwrap(), build_basis_family(5, 4, 1.3).unwrap());
}

proptest! {
    #[test]
    fn coefficients_match_factorial_form(p in 0usize..10, c in 0.1f64..10.0) {
        let a = taylor_coefficients(p + 1, c);
        let fact: f64 = (1..=p).map(|i| i as f64).product();
        let want = 1.0 / (fact * c.powi(p as i32));
        prop_assert!(((a[p] - want) / want).abs() < 1e-13);
    }

    #[test]
    fn rows_are_sorted_and_distinct(d in 1usize..10, p in 0usize..5) {
        let b = build_degree_basis(d, p).unwrap();
        let rows: Vec<_> = b.tuples().collect();
        prop_assert!(rows.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(rows.iter().all(|r| r.indices().windows(2).all(|w| w[0] <= w[1])));
    }
}
