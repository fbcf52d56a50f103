//! Admission, block validation, indexing and persistence.

use std::sync::Arc;

use anh_core::keys::{Keypair, Keyring};
use anh_core::ledger::{AdmitError, Block, GenesisError, Ledger, LedgerError};
use anh_core::tx::{Transaction, TxBuilder};
use anh_core::types::{AccountId, BlockHash, Position, StateKey, TokenAmount};
use anh_core::vm::gas::GasTable;

struct Fixture {
    ledger: Ledger,
    alice: Keypair,
    bob: Keypair,
}

fn fixture() -> Fixture {
    let keyring = Arc::new(Keyring::new());
    let alice = Keypair::named("alice", 1);
    let bob = Keypair::named("bob", 1);
    keyring.register(&alice);
    keyring.register(&bob);
    let ledger = Ledger::genesis(
        vec![(alice.account(), TokenAmount(10_000))],
        keyring,
        GasTable::default(),
    )
    .unwrap();
    Fixture { ledger, alice, bob }
}

fn pay(from: &Keypair, to: AccountId, value: u64, nonce: u64) -> Transaction {
    TxBuilder::transfer(from.account(), to, TokenAmount(value))
        .nonce(nonce)
        .gas(1000, TokenAmount(1))
        .sign(from)
}

#[test]
fn genesis_rejects_bad_allocations() {
    let keyring = Arc::new(Keyring::new());
    let a = Keypair::named("a", 0).account();
    let gas = GasTable::default();
    assert_eq!(
        Ledger::genesis(vec![], keyring.clone(), gas.clone()).err(),
        Some(GenesisError::Empty)
    );
    assert_eq!(
        Ledger::genesis(vec![(a, TokenAmount(0))], keyring.clone(), gas.clone()).err(),
        Some(GenesisError::ZeroAllocation(a))
    );
    assert_eq!(
        Ledger::genesis(
            vec![(a, TokenAmount(1)), (a, TokenAmount(2))],
            keyring.clone(),
            gas.clone()
        )
        .err(),
        Some(GenesisError::Duplicate(a))
    );
    let contract = AccountId::contract(&a, 0);
    assert_eq!(
        Ledger::genesis(vec![(contract, TokenAmount(1))], keyring, gas).err(),
        Some(GenesisError::NotUser(contract))
    );
}

#[test]
fn admission_checks_signature_nonce_and_zero_cost_fee() {
    let f = fixture();
    let forged = TxBuilder::transfer(f.alice.account(), f.bob.account(), TokenAmount(1))
        .gas(1000, TokenAmount(1))
        .sign(&f.bob);
    assert_eq!(f.ledger.admit(&forged), Err(AdmitError::BadSignature));
    assert_eq!(
        f.ledger.admit(&pay(&f.alice, f.bob.account(), 1, 3)),
        Err(AdmitError::BadNonce {
            expected: 0,
            got: 3
        })
    );
    assert_eq!(
        f.ledger.admit(&pay(&f.bob, f.alice.account(), 1, 0)),
        Err(AdmitError::InsufficientZeroCostFee {
            available: TokenAmount(0),
            fee: TokenAmount(1000)
        })
    );
    assert_eq!(
        f.ledger.admit(&pay(&f.alice, f.bob.account(), 1, 0)),
        Ok(())
    );
}

#[test]
fn overspending_transfers_are_admitted_and_sealed() {
    let mut f = fixture();
    // Fees fit the zero-cost balance; the values do not.
    let txs = vec![
        pay(&f.alice, f.bob.account(), 8_000, 0),
        pay(&f.alice, f.bob.account(), 8_000, 1),
    ];
    f.ledger.seal_block(txs).unwrap();
    assert_eq!(f.ledger.tx_count(), 2);
    assert_eq!(f.ledger.sent_count(&f.alice.account()), 2);
}

#[test]
fn builder_tracks_nonces_and_fees_within_a_block() {
    let f = fixture();
    let mut builder = f.ledger.builder();
    for nonce in 0..10 {
        builder
            .push(pay(&f.alice, f.bob.account(), 0, nonce))
            .unwrap();
    }
    assert_eq!(builder.expected_nonce(&f.alice.account()), 10);
    assert!(matches!(
        builder.push(pay(&f.alice, f.bob.account(), 0, 10)),
        Err(AdmitError::InsufficientZeroCostFee { .. })
    ));
}

#[test]
fn validation_rejects_tampered_blocks() {
    let mut f = fixture();
    let block = {
        let mut builder = f.ledger.builder();
        builder.push(pay(&f.alice, f.bob.account(), 5, 0)).unwrap();
        builder.finish()
    };
    assert!(f.ledger.validate_block(&block).valid);

    let rebased = block.rebased(BlockHash([7; 32]));
    assert!(!f.ledger.validate_block(&rebased).valid);

    let forged = Block::from_parts(
        block.height(),
        *block.prev_hash(),
        block.txs().to_vec(),
        vec![(f.bob.account(), TokenAmount(5))],
        block.hash(),
    );
    let check = f.ledger.validate_block(&forged);
    assert!(!check.valid);
    assert_eq!(check.reasons.len(), 2, "{:?}", check.reasons);

    f.ledger.append(block.clone()).unwrap();
    assert!(matches!(
        f.ledger.append(block),
        Err(LedgerError::InvalidBlock { height: 1, .. })
    ));
}

#[test]
fn index_records_senders_writers_and_outlays() {
    let mut f = fixture();
    let bob = f.bob.account();
    f.ledger
        .seal_block(vec![pay(&f.alice, bob, 100, 0), pay(&f.alice, bob, 200, 1)])
        .unwrap();
    let index = f.ledger.index();
    let alice = f.alice.account();
    assert_eq!(index.sent_by(&alice, f.ledger.end()).len(), 2);
    assert_eq!(
        index.total_expenses(&alice, f.ledger.end()),
        100 + 200 + 2 * 1000
    );
    assert_eq!(index.total_expenses(&alice, Position::new(1, 1)), 1100);
    assert_eq!(
        index
            .txs_touching(&StateKey::Balance(bob), f.ledger.end())
            .len(),
        2
    );
    assert_eq!(
        index
            .txs_touching(&StateKey::Balance(bob), Position::new(1, 0))
            .len(),
        0
    );
    assert!(index.sent_by(&bob, f.ledger.end()).is_empty());
}

#[test]
fn zero_cost_ledger_follows_direct_transfers() {
    let mut f = fixture();
    let bob = f.bob.account();
    f.ledger
        .seal_block(vec![pay(&f.alice, bob, 3_000, 0)])
        .unwrap();
    let zc = f.ledger.zero_cost();
    assert_eq!(zc.balance(&bob), TokenAmount(3_000));
    assert_eq!(
        zc.balance(&f.alice.account()),
        TokenAmount(10_000 - 3_000 - 1_000)
    );
    assert_eq!(
        zc.balance_before(&bob, Position::after_block(0)),
        TokenAmount(0)
    );
}

#[test]
fn blocks_survive_a_save_and_load() {
    let mut f = fixture();
    let bob = f.bob.account();
    f.ledger.seal_block(vec![pay(&f.alice, bob, 1, 0)]).unwrap();
    f.ledger.seal_block(vec![pay(&f.alice, bob, 2, 1)]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    f.ledger.save(dir.path()).unwrap();
    assert!(dir.path().join("block-00000002.bin").exists());
    let loaded = Ledger::load(
        dir.path(),
        f.ledger.keyring().clone(),
        f.ledger.gas_table().clone(),
    )
    .unwrap();
    assert_eq!(loaded.blocks(), f.ledger.blocks());
    assert_eq!(loaded.tx_count(), 2);
}

#[test]
fn loading_rejects_corrupt_files() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    f.ledger.save(dir.path()).unwrap();
    std::fs::write(dir.path().join("block-00000001.bin"), b"garbage").unwrap();
    assert!(Ledger::load(dir.path(), f.ledger.keyring().clone(), GasTable::default()).is_err());
    let empty = tempfile::tempdir().unwrap();
    assert!(Ledger::load(
        empty.path(),
        f.ledger.keyring().clone(),
        GasTable::default()
    )
    .is_err());
}
