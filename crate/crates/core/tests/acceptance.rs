//! One pass/fail line per acceptance criterion, at full scale.

mod common;

use common::*;

#[test]
fn acceptance() {
    let sweep = random_sweep(2024, 200, 1000);
    let verdicts = [
        (
            "AC1 lazy/eager equivalence",
            ac1_lazy_eager(&sweep, 200, 1000),
        ),
        ("AC2 double spend", ac2_double_spend()),
        ("AC3 figure one income costs", ac3_figure_one()),
        ("AC4 balance lower bound", ac4_lemma1(4, 60, 50, 10)),
        ("AC5 zero-cost soundness", ac5_zero_cost(&sweep)),
        ("AC6 transaction flooding", ac6_tx_dos(10_000)),
        (
            "AC7 targeted execution flooding",
            ac7_targeted(10, 10_000, 1_000),
        ),
        ("AC8 knapsack", ac8_knapsack()),
        ("AC9 oath", ac9_oath(9, 60, 200)),
        ("AC10 determinism", ac10_determinism(3)),
    ];
    let mut failed = Vec::new();
    for (name, verdict) in &verdicts {
        println!("{}", verdict.line(name));
        if !verdict.passed {
            failed.push(*name);
        }
    }
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
