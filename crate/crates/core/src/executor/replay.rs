use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use crate::state::{DeployedContract, StateFault, StateStore, WorldState};
use crate::tx::Transaction;
use crate::types::{AccountId, Position, StateKey, TokenAmount, TxId, TxLocator};
use crate::vm::gas::GasTable;
use crate::vm::{apply_tx, ExecError, ExecMode, ExecutionReceipt};

/// Base value of keys a partial replay knows nothing about. Such keys only
/// take relative credits and trusted debits, so their absolute value is
/// meaningless but their net changes are exact. Genesis supply stays far
/// below this, so neither direction can wrap.
pub const UNKNOWN_BASE: u64 = 1 << 62;

/// State for replaying a chain prefix, either completely or restricted to a
/// closure.
///
/// With a scope, a key is known only up to its bound: decision reads of the
/// key by transactions at positions after the bound, or of keys absent from
/// the scope, are faults.
pub struct ReplayState<'g> {
    genesis: &'g BTreeMap<AccountId, TokenAmount>,
    scope: Option<HashMap<StateKey, Position>>,
    values: HashMap<StateKey, u64>,
    contracts: HashMap<AccountId, Arc<DeployedContract>>,
    /// Value after each change, keyed by the position of the changing tx.
    history: HashMap<StateKey, Vec<(Position, u64)>>,
    outcomes: HashMap<TxId, bool>,
    cursor: Position,
}

impl<'g> ReplayState<'g> {
    /// Knows every key.
    pub fn full(genesis: &'g BTreeMap<AccountId, TokenAmount>) -> Self {
        Self::with_scope(genesis, None)
    }

    /// Knows only the keys of `scope`, each up to its bound.
    pub fn scoped(
        genesis: &'g BTreeMap<AccountId, TokenAmount>,
        scope: HashMap<StateKey, Position>,
    ) -> Self {
        Self::with_scope(genesis, Some(scope))
    }

    fn with_scope(
        genesis: &'g BTreeMap<AccountId, TokenAmount>,
        scope: Option<HashMap<StateKey, Position>>,
    ) -> Self {
        Self {
            genesis,
            scope,
            values: HashMap::new(),
            contracts: HashMap::new(),
            history: HashMap::new(),
            outcomes: HashMap::new(),
            cursor: Position::after_block(0),
        }
    }

    pub fn is_known(&self, key: &StateKey) -> bool {
        self.scope.as_ref().is_none_or(|s| s.contains_key(key))
    }

    fn initial(&self, key: &StateKey) -> u64 {
        if !self.is_known(key) {
            return UNKNOWN_BASE;
        }
        match key {
            StateKey::Balance(a) => self.genesis.get(a).map_or(0, |v| v.0),
            _ => 0,
        }
    }

    fn check(&self, key: &StateKey, at: Position) -> Result<(), StateFault> {
        match &self.scope {
            None => Ok(()),
            Some(scope) => match scope.get(key) {
                Some(bound) if at <= *bound => Ok(()),
                _ => Err(StateFault::OutsideClosure {
                    key: key.clone(),
                    at,
                }),
            },
        }
    }

    /// Executes the transaction at `locator`. Transactions must come in
    /// chain order.
    pub fn apply(
        &mut self,
        locator: TxLocator,
        tx: &Transaction,
        gas: &GasTable,
        mode: ExecMode,
    ) -> Result<ExecutionReceipt, ExecError> {
        debug_assert!(locator.position() >= self.cursor, "replay out of order");
        self.cursor = locator.position();
        let receipt = apply_tx(self, tx, self.cursor, gas, mode)?;
        self.outcomes.insert(tx.id(), receipt.status.is_applied());
        self.cursor = locator.next_position();
        Ok(receipt)
    }

    /// Current value of a known key.
    pub fn value(&self, key: &StateKey) -> Result<u64, StateFault> {
        self.check(key, self.cursor)?;
        Ok(self.peek(key))
    }

    /// Value of a known key just before `at`. Exact only when every writer
    /// of the key before `at` was replayed, which closures guarantee.
    pub fn value_at(&self, key: &StateKey, at: Position) -> Result<u64, StateFault> {
        self.check(key, at)?;
        Ok(self.history_value(key, at))
    }

    fn history_value(&self, key: &StateKey, at: Position) -> u64 {
        if let StateKey::Code(a) = key {
            return u64::from(self.contracts.contains_key(a));
        }
        match self.history.get(key) {
            Some(entries) => {
                let n = entries.partition_point(|(p, _)| *p < at);
                if n == 0 {
                    self.initial(key)
                } else {
                    entries[n - 1].1
                }
            }
            None => self.initial(key),
        }
    }

    pub fn outcome(&self, tx: &TxId) -> Option<bool> {
        self.outcomes.get(tx).copied()
    }

    /// Materializes the complete state. Only meaningful without a scope.
    pub fn world_state(&self) -> WorldState {
        debug_assert!(self.scope.is_none(), "partial state cannot be materialized");
        let mut state = WorldState::from_allocations(self.genesis.iter());
        for (key, value) in &self.values {
            state.set(key, *value);
        }
        for (id, contract) in &self.contracts {
            state.install(*id, contract.clone());
        }
        state
    }

    /// Every key written so far.
    pub fn touched_keys(&self) -> impl Iterator<Item = &StateKey> {
        self.values.keys()
    }
}

impl StateStore for ReplayState<'_> {
    fn read(&self, key: &StateKey) -> Result<u64, StateFault> {
        self.value(key)
    }

    fn peek(&self, key: &StateKey) -> u64 {
        match key {
            StateKey::Code(a) => u64::from(self.contracts.contains_key(a)),
            _ => self
                .values
                .get(key)
                .copied()
                .unwrap_or_else(|| self.initial(key)),
        }
    }

    fn write(&mut self, key: &StateKey, value: u64) {
        self.values.insert(key.clone(), value);
        let entries = self.history.entry(key.clone()).or_default();
        match entries.last_mut() {
            Some(last) if last.0 == self.cursor => last.1 = value,
            _ => entries.push((self.cursor, value)),
        }
    }

    fn contract(&self, id: &AccountId) -> Result<Option<Arc<DeployedContract>>, StateFault> {
        self.check(&StateKey::Code(*id), self.cursor)?;
        Ok(self.contracts.get(id).cloned())
    }

    fn deploy(&mut self, id: AccountId, contract: Arc<DeployedContract>) {
        self.contracts.insert(id, contract);
    }

    fn value_before(&self, key: &StateKey, at: Position) -> Result<u64, StateFault> {
        self.value_at(key, at)
    }

    fn outcome_of(&self, tx: &TxId) -> Result<Option<bool>, StateFault> {
        Ok(self.outcome(tx))
    }
}
