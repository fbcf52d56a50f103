//! Materialized world state and the storage interface the VM executes against.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{AccountId, Position, Slot, StateKey, TokenAmount, TxId};
use crate::vm::code::ContractCode;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DeployedContract {
    pub creator: AccountId,
    pub code: ContractCode,
}

/// A read the current replay cannot answer. Always an internal bug: either a
/// closure missed a dependency or a caller asked for history it did not keep.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StateFault {
    #[error("read of {key} at {at} falls outside the executed closure")]
    OutsideClosure { key: StateKey, at: Position },
    #[error("state keeps no history for {0}")]
    NoHistory(StateKey),
    #[error("outcome of {0:?} is not tracked by this state")]
    NoOutcomes(TxId),
}

/// Storage seen by transaction execution.
///
/// Values of balance, nonce and storage keys are plain words; `Code` keys
/// read as 1 when a contract is deployed and 0 otherwise.
pub trait StateStore {
    /// Reads a value that decides an outcome. Fails when the store cannot
    /// vouch for the key at the current position.
    fn read(&self, key: &StateKey) -> Result<u64, StateFault>;

    /// Current value for arithmetic on keys that are only credited. Partial
    /// stores may answer relative to an unknown base.
    fn peek(&self, key: &StateKey) -> u64;

    fn write(&mut self, key: &StateKey, value: u64);

    fn contract(&self, id: &AccountId) -> Result<Option<Arc<DeployedContract>>, StateFault>;

    fn deploy(&mut self, id: AccountId, contract: Arc<DeployedContract>);

    /// Value of `key` immediately before chain position `at`.
    fn value_before(&self, key: &StateKey, at: Position) -> Result<u64, StateFault>;

    /// Whether an already executed transaction applied.
    fn outcome_of(&self, tx: &TxId) -> Result<Option<bool>, StateFault>;
}

/// Balances, nonces, storage and deployed code. Absent entries read as zero.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldState {
    balances: BTreeMap<AccountId, TokenAmount>,
    nonces: BTreeMap<AccountId, u64>,
    storage: BTreeMap<(AccountId, Slot), u64>,
    contracts: BTreeMap<AccountId, Arc<DeployedContract>>,
}

impl WorldState {
    pub fn from_allocations<'a>(
        allocations: impl IntoIterator<Item = (&'a AccountId, &'a TokenAmount)>,
    ) -> Self {
        let mut state = Self::default();
        for (account, amount) in allocations {
            state.set(&StateKey::Balance(*account), amount.0);
        }
        state
    }

    pub fn get(&self, key: &StateKey) -> u64 {
        match key {
            StateKey::Balance(a) => self.balances.get(a).map_or(0, |b| b.0),
            StateKey::Nonce(a) => self.nonces.get(a).copied().unwrap_or(0),
            StateKey::Storage(a, s) => self.storage.get(&(*a, s.clone())).copied().unwrap_or(0),
            StateKey::Code(a) => u64::from(self.contracts.contains_key(a)),
        }
    }

    pub fn set(&mut self, key: &StateKey, value: u64) {
        match key {
            StateKey::Balance(a) => {
                if value == 0 {
                    self.balances.remove(a);
                } else {
                    self.balances.insert(*a, TokenAmount(value));
                }
            }
            StateKey::Nonce(a) => {
                if value == 0 {
                    self.nonces.remove(a);
                } else {
                    self.nonces.insert(*a, value);
                }
            }
            StateKey::Storage(a, s) => {
                if value == 0 {
                    self.storage.remove(&(*a, s.clone()));
                } else {
                    self.storage.insert((*a, s.clone()), value);
                }
            }
            StateKey::Code(_) => panic!("code is deployed, not set"),
        }
    }

    pub fn balance(&self, account: &AccountId) -> TokenAmount {
        self.balances.get(account).copied().unwrap_or_default()
    }

    pub fn nonce(&self, account: &AccountId) -> u64 {
        self.nonces.get(account).copied().unwrap_or(0)
    }

    pub fn contract(&self, account: &AccountId) -> Option<&Arc<DeployedContract>> {
        self.contracts.get(account)
    }

    pub fn install(&mut self, account: AccountId, contract: Arc<DeployedContract>) {
        self.contracts.insert(account, contract);
    }

    pub fn balances(&self) -> impl Iterator<Item = (&AccountId, &TokenAmount)> {
        self.balances.iter()
    }

    pub fn total_supply(&self) -> u128 {
        self.balances.values().map(|b| u128::from(b.0)).sum()
    }

    /// Every key holding a non-default value.
    pub fn keys(&self) -> impl Iterator<Item = StateKey> + '_ {
        self.balances
            .keys()
            .map(|a| StateKey::Balance(*a))
            .chain(self.nonces.keys().map(|a| StateKey::Nonce(*a)))
            .chain(
                self.storage
                    .keys()
                    .map(|(a, s)| StateKey::Storage(*a, s.clone())),
            )
            .chain(self.contracts.keys().map(|a| StateKey::Code(*a)))
    }
}

/// A bare world state has full knowledge of the present and no history.
impl StateStore for WorldState {
    fn read(&self, key: &StateKey) -> Result<u64, StateFault> {
        Ok(self.get(key))
    }

    fn peek(&self, key: &StateKey) -> u64 {
        self.get(key)
    }

    fn write(&mut self, key: &StateKey, value: u64) {
        self.set(key, value)
    }

    fn contract(&self, id: &AccountId) -> Result<Option<Arc<DeployedContract>>, StateFault> {
        Ok(self.contracts.get(id).cloned())
    }

    fn deploy(&mut self, id: AccountId, contract: Arc<DeployedContract>) {
        self.install(id, contract)
    }

    fn value_before(&self, key: &StateKey, _at: Position) -> Result<u64, StateFault> {
        Err(StateFault::NoHistory(key.clone()))
    }

    fn outcome_of(&self, tx: &TxId) -> Result<Option<bool>, StateFault> {
        Err(StateFault::NoOutcomes(*tx))
    }
}
