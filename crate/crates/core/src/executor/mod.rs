//! Eager full replay (the oracle) and lazy replay of provenance closures.

mod closure;
mod replay;

use std::collections::HashMap;

use serde::Serialize;
use thiserror::Error;

pub use closure::{dependency_closure, ProvenanceClosure, Prune, Seed};
pub use replay::{ReplayState, UNKNOWN_BASE};

use crate::ledger::Ledger;
use crate::query::{Query, QueryValue};
use crate::types::{Gas, Position, TxId};
use crate::vm::{ExecError, ExecMode, ExecutionReceipt};

/// Result of replaying every transaction before a position.
pub struct EagerRun<'l> {
    pub state: ReplayState<'l>,
    pub receipts: Vec<ExecutionReceipt>,
    by_id: HashMap<TxId, usize>,
}

impl EagerRun<'_> {
    pub fn receipt(&self, tx: &TxId) -> Option<&ExecutionReceipt> {
        self.by_id.get(tx).map(|i| &self.receipts[*i])
    }

    /// The oracle's answer to a key-valued query.
    pub fn answer(&self, query: &Query) -> Option<QueryValue> {
        match query {
            Query::TransferSucceeded { tx } => self.state.outcome(tx).map(QueryValue::Bool),
            q => {
                let (key, at) = q.key_at()?;
                Some(
                    q.answer_from_value(
                        self.state
                            .value_at(&key, at)
                            .expect("full state knows every key"),
                    ),
                )
            }
        }
    }
}

/// Replays the chain from genesis up to (excluding) `upto` with full state.
pub fn eager_execute(ledger: &Ledger, upto: Position) -> Result<EagerRun<'_>, ExecError> {
    let mut state = ReplayState::full(ledger.genesis_allocations());
    let mut receipts = Vec::with_capacity(ledger.tx_count());
    let mut by_id = HashMap::with_capacity(ledger.tx_count());
    let gas = ledger.gas_table();
    for (locator, tx) in ledger.located_txs() {
        if locator.position() >= upto {
            break;
        }
        let receipt = state.apply(locator, tx, gas, ExecMode::Full)?;
        by_id.insert(receipt.tx_id, receipts.len());
        receipts.push(receipt);
    }
    Ok(EagerRun {
        state,
        receipts,
        by_id,
    })
}

/// Result of replaying only a closure's members.
pub struct ClosureRun<'l> {
    pub state: ReplayState<'l>,
    pub receipts: Vec<ExecutionReceipt>,
}

impl ClosureRun<'_> {
    /// Gas charged by every replayed transaction, intrinsic costs included.
    pub fn gas_charged(&self) -> Gas {
        self.receipts.iter().map(|r| r.gas_used).sum()
    }

    /// Gas of executed contract code. Transfers and creations are plain
    /// balance arithmetic and count as zero.
    pub fn gas_executed(&self) -> Gas {
        self.receipts
            .iter()
            .map(ExecutionReceipt::compute_gas)
            .sum()
    }

    pub fn txs_executed(&self) -> usize {
        self.receipts.len()
    }

    pub fn receipt(&self, tx: &TxId) -> Option<&ExecutionReceipt> {
        self.receipts.iter().find(|r| &r.tx_id == tx)
    }
}

/// Replays the members of `closure` in chain order against a state that
/// knows only the closure's frontier.
pub fn execute_closure<'l>(
    ledger: &'l Ledger,
    closure: &ProvenanceClosure,
) -> Result<ClosureRun<'l>, ExecError> {
    let mut state = ReplayState::scoped(ledger.genesis_allocations(), closure.frontier.clone());
    let mut receipts = Vec::with_capacity(closure.len());
    for locator in &closure.txs {
        let mode = if closure.pruned.contains(locator) {
            ExecMode::ZeroCostProven
        } else {
            ExecMode::Full
        };
        receipts.push(state.apply(*locator, ledger.tx(locator), ledger.gas_table(), mode)?);
    }
    Ok(ClosureRun { state, receipts })
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ObserveError {
    #[error("closure needs up to {needed} gas, budget is {budget}")]
    ClosureExceedsBudget { needed: Gas, budget: Gas },
    #[error("transaction {0} is not on chain")]
    UnknownTx(TxId),
    #[error("position {at} lies beyond the chain end {end}")]
    BeyondChain { at: Position, end: Position },
    #[error(transparent)]
    Exec(#[from] ExecError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Observation {
    pub result: QueryValue,
    pub txs_executed: usize,
    /// Gas of executed contract code.
    pub gas_executed: Gas,
    /// Gas charged by the replayed transactions, intrinsic costs included.
    pub gas_charged: Gas,
    /// Answered from the zero-cost ledger without execution.
    pub zero_cost: bool,
}

/// Answers `query` by executing exactly its dependency closure. A budget
/// caps the closure's gas limit total before anything runs.
pub fn observe(
    ledger: &Ledger,
    query: &Query,
    budget: Option<Gas>,
) -> Result<Observation, ObserveError> {
    if let Query::BalanceAtLeast {
        account,
        amount,
        at,
    } = query
    {
        check_position(ledger, *at)?;
        if ledger.zero_cost().balance_before(account, *at) >= *amount {
            return Ok(Observation {
                result: QueryValue::Bool(true),
                txs_executed: 0,
                gas_executed: 0,
                gas_charged: 0,
                zero_cost: true,
            });
        }
    }
    let seed = match query {
        Query::TransferSucceeded { tx } => {
            Seed::Tx(ledger.locate(tx).ok_or(ObserveError::UnknownTx(*tx))?)
        }
        q => {
            let (key, at) = q.key_at().expect("key-valued query");
            check_position(ledger, at)?;
            Seed::Key(key, at)
        }
    };
    let closure = dependency_closure(ledger, &[seed], Prune::None);
    if let Some(budget) = budget {
        if closure.gas_limit_total > budget {
            return Err(ObserveError::ClosureExceedsBudget {
                needed: closure.gas_limit_total,
                budget,
            });
        }
    }
    let run = execute_closure(ledger, &closure)?;
    let result = match query {
        Query::TransferSucceeded { tx } => {
            QueryValue::Bool(run.state.outcome(tx).expect("seed tx executed"))
        }
        q => {
            let (key, at) = q.key_at().expect("key-valued query");
            q.answer_from_value(run.state.value_at(&key, at).map_err(ExecError::from)?)
        }
    };
    Ok(Observation {
        result,
        txs_executed: run.txs_executed(),
        gas_executed: run.gas_executed(),
        gas_charged: run.gas_charged(),
        zero_cost: false,
    })
}

fn check_position(ledger: &Ledger, at: Position) -> Result<(), ObserveError> {
    let end = ledger.end();
    if at > end {
        return Err(ObserveError::BeyondChain { at, end });
    }
    Ok(())
}
