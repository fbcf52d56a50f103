//! Defense metrics of the three flooding attacks.

mod common;

use anh_core::attacks::{run_attack, AttackKind};
use anh_core::types::TokenAmount;
use common::*;

#[test]
fn transaction_flood_is_rejected_at_admission() {
    let v = ac6_tx_dos(2_000);
    assert!(v.passed, "{}", v.detail);
}

#[test]
fn targeted_flood_does_not_reach_minimal_queries() {
    let v = ac7_targeted(10, 500, 1_000);
    assert!(v.passed, "{}", v.detail);
}

#[test]
fn untargeted_flood_is_admitted_but_never_executed() {
    let small = run_attack(AttackKind::ExecDos, 10, 500, TokenAmount(1), "victim", 3).unwrap();
    let large = run_attack(AttackKind::ExecDos, 300, 500, TokenAmount(1), "victim", 3).unwrap();
    for m in [&small.metrics, &large.metrics] {
        assert_eq!(m.admission_rejects, 0);
        assert_eq!(m.vm_steps_during_consensus, 0);
        assert!(m.victim_pay_accepted);
    }
    assert_eq!(small.metrics.victim_maq_gas, large.metrics.victim_maq_gas);
    assert_eq!(
        small.metrics.victim_exact_balance_gas,
        large.metrics.victim_exact_balance_gas
    );
}
