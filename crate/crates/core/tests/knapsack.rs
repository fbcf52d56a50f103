//! Covering knapsack solver against brute force.

mod common;

use common::*;

#[test]
fn exact_solver_matches_brute_force_and_greedy_stays_documented() {
    let v = ac8_knapsack();
    assert!(v.passed, "{}", v.detail);
}

#[test]
fn other_seeds_keep_the_solver_within_bounds() {
    for seed in 100..103 {
        let s = knapsack_stats(seed, 300, 12);
        assert_eq!(s.dp_mismatches, 0);
        assert_eq!(s.solve_over_bound, 0);
    }
}
