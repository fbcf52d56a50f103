//! Lazy execution against eager replay on seeded random scenarios.

mod common;

use common::*;

#[test]
fn random_scenarios_agree_with_the_oracle() {
    let sweep = random_sweep(7, 60, 400);
    let verdict = ac1_lazy_eager(&sweep, 60, 400);
    assert!(verdict.passed, "{}", verdict.detail);
}

#[test]
fn zero_cost_balances_never_exceed_the_oracle() {
    let sweep = random_sweep(17, 40, 300);
    let verdict = ac5_zero_cost(&sweep);
    assert!(verdict.passed, "{}", verdict.detail);
}
