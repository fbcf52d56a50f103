//! Differential check of lazy execution against eager full replay.

use std::collections::{BTreeSet, HashMap};

use serde::Serialize;

use crate::executor::{dependency_closure, eager_execute, execute_closure, observe, Prune, Seed};
use crate::ledger::Ledger;
use crate::query::{Query, QueryValue};
use crate::types::{AccountId, Position, StateKey, TokenAmount, TxId};
use crate::vm::ExecError;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StateDiff {
    pub key: StateKey,
    pub at: Position,
    pub eager: u64,
    /// The lazy value, or why none was produced.
    pub lazy: Result<u64, String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ReceiptDiff {
    pub tx: TxId,
    pub key: StateKey,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ZeroCostViolation {
    pub account: AccountId,
    pub at: Position,
    pub zero_cost: TokenAmount,
    pub eager: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SupplyCheck {
    pub genesis: u128,
    pub balances: u128,
    pub fees: u128,
}

impl SupplyCheck {
    pub fn conserved(&self) -> bool {
        self.genesis == self.balances + self.fees
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OracleReport {
    pub boundaries: u64,
    pub keys_checked: usize,
    pub comparisons: usize,
    pub diffs: Vec<StateDiff>,
    /// Closure receipts that disagree with the eager receipt of the same tx.
    pub receipt_diffs: Vec<ReceiptDiff>,
    pub zero_cost_violations: Vec<ZeroCostViolation>,
    pub supply: SupplyCheck,
}

impl OracleReport {
    pub fn is_clean(&self) -> bool {
        self.diffs.is_empty()
            && self.receipt_diffs.is_empty()
            && self.zero_cost_violations.is_empty()
            && self.supply.conserved()
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .diffs
            .iter()
            .map(|d| format!("{} at {}: eager {} lazy {:?}", d.key, d.at, d.eager, d.lazy))
            .collect();
        out.extend(
            self.receipt_diffs
                .iter()
                .map(|d| format!("receipt of {} differs in the closure of {}", d.tx, d.key)),
        );
        out.extend(self.zero_cost_violations.iter().map(|v| {
            format!(
                "zero-cost balance {} of {} exceeds {} at {}",
                v.zero_cost, v.account, v.eager, v.at
            )
        }));
        if !self.supply.conserved() {
            out.push(format!("supply not conserved: {:?}", self.supply));
        }
        out
    }
}

/// Balance and storage keys of the chain: genesis accounts plus every key a
/// transaction wrote.
fn checked_keys(ledger: &Ledger, touched: impl Iterator<Item = StateKey>) -> Vec<StateKey> {
    let mut keys: BTreeSet<StateKey> = ledger
        .genesis_allocations()
        .keys()
        .map(|a| StateKey::Balance(*a))
        .collect();
    keys.extend(touched.filter(|k| matches!(k, StateKey::Balance(_) | StateKey::Storage(..))));
    keys.into_iter().collect()
}

fn lazy_query(key: &StateKey, at: Position) -> Query {
    match key {
        StateKey::Balance(account) => Query::ExactBalance {
            account: *account,
            at,
        },
        StateKey::Storage(contract, slot) => Query::StorageValue {
            contract: *contract,
            slot: slot.clone(),
            at,
        },
        _ => unreachable!("only balance and storage keys are checked"),
    }
}

/// Compares `observe` with eager replay for every balance and storage key at
/// every block boundary, checks the zero-cost ledger never exceeds the true
/// balance, checks conservation of supply, and compares the receipts of
/// each tip closure with eager receipts.
pub fn differential_check(ledger: &Ledger) -> Result<OracleReport, ExecError> {
    let end = ledger.end();
    let eager = eager_execute(ledger, end)?;
    let keys = checked_keys(ledger, eager.state.touched_keys().cloned());
    let tip = ledger.tip_height();
    let mut diffs = Vec::new();
    let mut zero_cost_violations = Vec::new();
    let mut comparisons = 0;

    for height in 0..=tip {
        let at = Position::after_block(height);
        for key in &keys {
            let truth = eager.state.value_at(key, at)?;
            comparisons += 1;
            let lazy = observe(ledger, &lazy_query(key, at), None)
                .map(|o| match o.result {
                    QueryValue::Amount(a) => a.0,
                    QueryValue::Word(w) => w,
                    QueryValue::Bool(_) => unreachable!("exact queries return values"),
                })
                .map_err(|e| e.to_string());
            if lazy.as_ref() != Ok(&truth) {
                diffs.push(StateDiff {
                    key: key.clone(),
                    at,
                    eager: truth,
                    lazy,
                });
            }
            if let StateKey::Balance(account) = key {
                let zc = ledger.zero_cost().balance_before(account, at);
                if zc.0 > truth {
                    zero_cost_violations.push(ZeroCostViolation {
                        account: *account,
                        at,
                        zero_cost: zc,
                        eager: truth,
                    });
                }
            }
        }
    }

    let signatures: HashMap<TxId, _> = eager
        .receipts
        .iter()
        .map(|r| (r.tx_id, r.effect_signature()))
        .collect();
    let mut receipt_diffs = Vec::new();
    for key in &keys {
        let closure = dependency_closure(ledger, &[Seed::Key(key.clone(), end)], Prune::None);
        let run = execute_closure(ledger, &closure)?;
        for receipt in &run.receipts {
            if signatures.get(&receipt.tx_id) != Some(&receipt.effect_signature()) {
                receipt_diffs.push(ReceiptDiff {
                    tx: receipt.tx_id,
                    key: key.clone(),
                });
            }
        }
    }

    let world = eager.state.world_state();
    let supply = SupplyCheck {
        genesis: ledger
            .genesis_allocations()
            .values()
            .map(|a| u128::from(a.0))
            .sum(),
        balances: world.total_supply(),
        fees: eager
            .receipts
            .iter()
            .map(|r| u128::from(r.fee_charged.0))
            .sum(),
    };
    Ok(OracleReport {
        boundaries: tip + 1,
        keys_checked: keys.len(),
        comparisons,
        diffs,
        receipt_diffs,
        zero_cost_violations,
        supply,
    })
}
