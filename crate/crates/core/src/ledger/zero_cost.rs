use std::collections::{BTreeMap, HashSet};

use crate::tx::{Transaction, TxKind};
use crate::types::{AccountId, Position, TokenAmount, TxId};

/// Balances provably funded by genesis allocations through direct
/// user-to-user transfers. Never exceeds the true balance of any account.
#[derive(Clone, Debug, Default)]
pub struct ZeroCostLedger {
    current: BTreeMap<AccountId, u64>,
    /// Value after each change, keyed by the position of the changing tx.
    history: BTreeMap<AccountId, Vec<(Position, u64)>>,
    proven: HashSet<TxId>,
}

/// What one transaction does to the zero-cost ledger.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ZcStep {
    pub updates: Vec<(AccountId, u64)>,
    /// The sender's zero-cost funds covered fee and value, so the body's
    /// balance debit cannot fail.
    pub proven: bool,
}

/// Computes the zero-cost effect of `tx` given current zero-cost balances.
/// The fee must already have been admitted against `zc(sender)`.
pub fn zc_step(tx: &Transaction, zc: impl Fn(&AccountId) -> u64) -> ZcStep {
    let sender = tx.sender();
    let recipient = tx.recipient();
    let value = tx.value().0;
    let after_fee = zc(&sender)
        .checked_sub(tx.fee_reservation().0)
        .expect("fee admitted against zero-cost balance");
    let covered = after_fee >= value;
    let proven = covered && matches!(tx.kind(), TxKind::Transfer | TxKind::ContractCreate);
    let user_to_user = tx.kind() == TxKind::Transfer && recipient.is_user();
    let mut updates = vec![(sender, after_fee.saturating_sub(value))];
    if user_to_user && covered {
        if recipient == sender {
            updates[0].1 = after_fee;
        } else {
            let credited = zc(&recipient)
                .checked_add(value)
                .expect("zero-cost funds bounded by supply");
            updates.push((recipient, credited));
        }
    }
    ZcStep { updates, proven }
}

impl ZeroCostLedger {
    pub fn from_genesis<'a>(
        allocations: impl IntoIterator<Item = (&'a AccountId, &'a TokenAmount)>,
    ) -> Self {
        let mut zc = Self::default();
        for (account, amount) in allocations {
            zc.set(*account, amount.0, Position::GENESIS);
        }
        zc
    }

    pub fn balance(&self, account: &AccountId) -> TokenAmount {
        TokenAmount(self.current.get(account).copied().unwrap_or(0))
    }

    /// Zero-cost balance immediately before chain position `at`.
    pub fn balance_before(&self, account: &AccountId, at: Position) -> TokenAmount {
        let Some(entries) = self.history.get(account) else {
            return TokenAmount::ZERO;
        };
        let n = entries.partition_point(|(p, _)| *p < at);
        TokenAmount(if n == 0 { 0 } else { entries[n - 1].1 })
    }

    pub fn is_proven(&self, tx: &TxId) -> bool {
        self.proven.contains(tx)
    }

    pub fn proven_count(&self) -> usize {
        self.proven.len()
    }

    pub fn accounts(&self) -> impl Iterator<Item = (&AccountId, TokenAmount)> {
        self.current.iter().map(|(a, v)| (a, TokenAmount(*v)))
    }

    pub(crate) fn apply(&mut self, tx: &Transaction, position: Position) {
        let step = zc_step(tx, |a| self.balance(a).0);
        for (account, value) in step.updates {
            self.set(account, value, position);
        }
        if step.proven {
            self.proven.insert(tx.id());
        }
    }

    fn set(&mut self, account: AccountId, value: u64, position: Position) {
        self.current.insert(account, value);
        let entries = self.history.entry(account).or_default();
        match entries.last_mut() {
            Some(last) if last.0 == position => last.1 = value,
            _ => entries.push((position, value)),
        }
    }
}
