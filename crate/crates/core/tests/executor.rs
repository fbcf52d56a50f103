//! Provenance closures and lazy observation on a small contract chain.

use std::sync::Arc;

use anh_core::executor::{
    dependency_closure, eager_execute, execute_closure, observe, ObserveError, Prune, Seed,
};
use anh_core::keys::{Keypair, Keyring};
use anh_core::ledger::Ledger;
use anh_core::query::{Query, QueryValue};
use anh_core::tx::TxBuilder;
use anh_core::types::{AccountId, Position, Slot, StateKey, TokenAmount};
use anh_core::vm::code::ContractCode;
use anh_core::vm::gas::GasTable;
use anh_core::vm::TxStatus;

struct Chain {
    ledger: Ledger,
    alice: AccountId,
    bob: AccountId,
    carol: AccountId,
    counter: AccountId,
}

/// Block 1: Carol deploys a counter. Block 2: Carol bumps it twice, Alice
/// pays Bob. Block 3: Bob pays Alice.
fn chain() -> Chain {
    let keyring = Arc::new(Keyring::new());
    let [alice, bob, carol] = ["alice", "bob", "carol"].map(|n| Keypair::named(n, 9));
    for k in [&alice, &bob, &carol] {
        keyring.register(k);
    }
    let gas = GasTable::default();
    let mut ledger = Ledger::genesis(
        vec![
            (alice.account(), TokenAmount(50_000)),
            (carol.account(), TokenAmount(50_000)),
        ],
        keyring,
        gas.clone(),
    )
    .unwrap();
    let code = ContractCode::assemble("LOAD n\nPUSH 1\nADD\nSTORE n", |_| None).unwrap();
    let create = TxBuilder::create(carol.account(), code, TokenAmount(0))
        .gas(gas.intrinsic_create, TokenAmount(1))
        .sign(&carol);
    let counter = create.recipient();
    ledger.seal_block(vec![create]).unwrap();
    let bump = |nonce| {
        TxBuilder::call(carol.account(), counter, Vec::new())
            .nonce(nonce)
            .gas(3_000, TokenAmount(1))
            .declare(StateKey::Storage(counter, Slot::new("n")))
            .sign(&carol)
    };
    let transfer = |from: &Keypair, to: AccountId, value, nonce| {
        TxBuilder::transfer(from.account(), to, TokenAmount(value))
            .nonce(nonce)
            .gas(gas.intrinsic_transfer, TokenAmount(1))
            .sign(from)
    };
    ledger
        .seal_block(vec![
            bump(1),
            bump(2),
            transfer(&alice, bob.account(), 5_000, 0),
        ])
        .unwrap();
    ledger
        .seal_block(vec![transfer(&bob, alice.account(), 1_000, 0)])
        .unwrap();
    Chain {
        ledger,
        alice: alice.account(),
        bob: bob.account(),
        carol: carol.account(),
        counter,
    }
}

#[test]
fn storage_closure_holds_only_the_counter_history() {
    let c = chain();
    let key = StateKey::Storage(c.counter, Slot::new("n"));
    let closure = dependency_closure(&c.ledger, &[Seed::Key(key, c.ledger.end())], Prune::None);
    // The creation and both bumps; no transfers.
    assert_eq!(closure.len(), 3);
    let run = execute_closure(&c.ledger, &closure).unwrap();
    assert!(run.gas_executed() > 0);
    assert!(run.gas_charged() > run.gas_executed());
}

#[test]
fn observe_matches_eager_replay() {
    let c = chain();
    let eager = eager_execute(&c.ledger, c.ledger.end()).unwrap();
    for account in [c.alice, c.bob, c.carol, c.counter] {
        for height in 0..=c.ledger.tip_height() {
            let query = Query::ExactBalance {
                account,
                at: Position::after_block(height),
            };
            let lazy = observe(&c.ledger, &query, None).unwrap().result;
            assert_eq!(Some(lazy), eager.answer(&query));
        }
    }
    let query = Query::StorageValue {
        contract: c.counter,
        slot: Slot::new("n"),
        at: c.ledger.end(),
    };
    assert_eq!(
        observe(&c.ledger, &query, None).unwrap().result,
        QueryValue::Word(2)
    );
}

#[test]
fn plain_transfer_history_costs_no_contract_gas() {
    let c = chain();
    let obs = observe(
        &c.ledger,
        &Query::ExactBalance {
            account: c.bob,
            at: c.ledger.end(),
        },
        None,
    )
    .unwrap();
    assert_eq!(
        obs.result,
        QueryValue::Amount(TokenAmount(5_000 - 1_000 - 1_000))
    );
    assert_eq!(obs.gas_executed, 0);
    assert_eq!(obs.txs_executed, 2);
}

#[test]
fn zero_cost_ledger_answers_threshold_queries_for_free() {
    let c = chain();
    let obs = observe(
        &c.ledger,
        &Query::BalanceAtLeast {
            account: c.bob,
            amount: TokenAmount(1_000),
            at: c.ledger.end(),
        },
        None,
    )
    .unwrap();
    assert!(obs.zero_cost);
    assert_eq!(obs.txs_executed, 0);
}

#[test]
fn budget_and_range_are_enforced() {
    let c = chain();
    let query = Query::StorageValue {
        contract: c.counter,
        slot: Slot::new("n"),
        at: c.ledger.end(),
    };
    assert!(matches!(
        observe(&c.ledger, &query, Some(10)),
        Err(ObserveError::ClosureExceedsBudget { .. })
    ));
    let beyond = Query::ExactBalance {
        account: c.alice,
        at: Position::after_block(9),
    };
    assert!(matches!(
        observe(&c.ledger, &beyond, None),
        Err(ObserveError::BeyondChain { .. })
    ));
}

#[test]
fn eager_receipts_cover_every_transaction() {
    let c = chain();
    let eager = eager_execute(&c.ledger, c.ledger.end()).unwrap();
    assert_eq!(eager.receipts.len(), c.ledger.tx_count());
    assert!(eager.receipts.iter().all(|r| r.status == TxStatus::Applied));
}
