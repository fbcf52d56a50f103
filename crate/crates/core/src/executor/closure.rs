use std::collections::{BTreeSet, HashMap};

use serde::Serialize;

use crate::ledger::Ledger;
use crate::tx::QueryDependency;
use crate::types::{Gas, Position, StateKey, TxLocator};

/// Where a closure starts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Seed {
    /// The value of a key just before a position.
    Key(StateKey, Position),
    /// The complete effect of one transaction.
    Tx(TxLocator),
}

/// Which members may be included without following their dependencies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Prune {
    None,
    /// Transfers and creations whose success the zero-cost ledger proves.
    ZeroCostProven,
}

/// Chain-ordered transactions whose execution determines the seeds.
///
/// Closed: every dependency of an expanded member is a member and lies
/// earlier in the chain. Pruned members are executed but not expanded.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ProvenanceClosure {
    pub txs: Vec<TxLocator>,
    pub pruned: BTreeSet<TxLocator>,
    /// Each reached key with the position up to which its value is
    /// determined.
    pub frontier: HashMap<StateKey, Position>,
    /// Upper bound before execution: sum of member gas limits.
    pub gas_limit_total: Gas,
}

impl ProvenanceClosure {
    pub fn len(&self) -> usize {
        self.txs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.txs.is_empty()
    }

    pub fn contains(&self, locator: &TxLocator) -> bool {
        self.txs.binary_search(locator).is_ok()
    }
}

enum Item {
    Key(StateKey, Position),
    Tx(TxLocator),
}

/// Computes the closure of `seeds` from declared write sets alone.
pub fn dependency_closure(ledger: &Ledger, seeds: &[Seed], prune: Prune) -> ProvenanceClosure {
    let index = ledger.index();
    let mut frontier: HashMap<StateKey, Position> = HashMap::new();
    let mut members: BTreeSet<TxLocator> = BTreeSet::new();
    let mut pruned = BTreeSet::new();
    let mut work: Vec<Item> = seeds
        .iter()
        .map(|s| match s {
            Seed::Key(k, at) => Item::Key(k.clone(), *at),
            Seed::Tx(l) => Item::Tx(*l),
        })
        .collect();

    while let Some(item) = work.pop() {
        match item {
            Item::Key(key, bound) => {
                let done = frontier.get(&key).copied();
                if done.is_some_and(|d| d >= bound) {
                    continue;
                }
                let postings = index.txs_touching(&key, bound);
                let start = done.map_or(0, |d| postings.partition_point(|l| l.position() < d));
                work.extend(postings[start..].iter().map(|l| Item::Tx(*l)));
                frontier.insert(key, bound);
            }
            Item::Tx(locator) => {
                if !members.insert(locator) {
                    continue;
                }
                let tx = ledger.tx(&locator);
                if prune == Prune::ZeroCostProven && ledger.zero_cost().is_proven(&locator.tx_id) {
                    pruned.insert(locator);
                    continue;
                }
                let here = locator.position();
                work.extend(tx.read_keys().into_iter().map(|k| Item::Key(k, here)));
                match tx.query_dependency() {
                    Some(QueryDependency::Key(key, at)) if at <= here => {
                        work.push(Item::Key(key, at));
                    }
                    Some(QueryDependency::Outcome(id)) => {
                        if let Some(dep) = ledger.locate(&id).filter(|d| *d < locator) {
                            work.push(Item::Tx(dep));
                        }
                    }
                    _ => {}
                }
            }
        }
    }

    let gas_limit_total = members.iter().map(|l| ledger.tx(l).gas_limit()).sum();
    ProvenanceClosure {
        txs: members.into_iter().collect(),
        pruned,
        frontier,
        gas_limit_total,
    }
}
