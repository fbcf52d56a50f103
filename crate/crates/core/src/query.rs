//! Questions about the world state at a chain position.

use serde::{Deserialize, Serialize};

use crate::types::{AccountId, Position, Slot, StateKey, TokenAmount, TxId};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Query {
    ExactBalance {
        account: AccountId,
        at: Position,
    },
    /// Minimal accounting query: does the balance reach `amount`?
    BalanceAtLeast {
        account: AccountId,
        amount: TokenAmount,
        at: Position,
    },
    /// Minimal accounting query: did the transaction apply (not roll back)?
    TransferSucceeded {
        tx: TxId,
    },
    StorageValue {
        contract: AccountId,
        slot: Slot,
        at: Position,
    },
}

impl Query {
    /// The state key and position a key-valued query reads.
    pub fn key_at(&self) -> Option<(StateKey, Position)> {
        match self {
            Query::ExactBalance { account, at } | Query::BalanceAtLeast { account, at, .. } => {
                Some((StateKey::Balance(*account), *at))
            }
            Query::StorageValue { contract, slot, at } => {
                Some((StateKey::Storage(*contract, slot.clone()), *at))
            }
            Query::TransferSucceeded { .. } => None,
        }
    }

    /// Turns the raw value of [`Query::key_at`] into the query's answer.
    pub fn answer_from_value(&self, value: u64) -> QueryValue {
        match self {
            Query::ExactBalance { .. } => QueryValue::Amount(TokenAmount(value)),
            Query::BalanceAtLeast { amount, .. } => QueryValue::Bool(value >= amount.0),
            Query::StorageValue { .. } => QueryValue::Word(value),
            Query::TransferSucceeded { .. } => {
                unreachable!("TransferSucceeded is not key-valued")
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QueryValue {
    Amount(TokenAmount),
    Bool(bool),
    Word(u64),
}

/// Payload of an oath transaction: the accountant vouches that `query`
/// evaluates to `claimed`, staking `penalty` from the oath contract's balance.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OathClaim {
    pub query: Query,
    pub claimed: QueryValue,
    pub penalty: TokenAmount,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::AccountKind;

    #[test]
    fn answers_follow_query_kind() {
        let a = AccountId::new(AccountKind::User, [1; 32]);
        let at = Position::new(1, 0);
        let q = Query::BalanceAtLeast {
            account: a,
            amount: TokenAmount(10),
            at,
        };
        assert_eq!(q.answer_from_value(10), QueryValue::Bool(true));
        assert_eq!(q.answer_from_value(9), QueryValue::Bool(false));
        assert_eq!(q.key_at(), Some((StateKey::Balance(a), at)));
        let q = Query::ExactBalance { account: a, at };
        assert_eq!(q.answer_from_value(3), QueryValue::Amount(TokenAmount(3)));
        assert_eq!(
            Query::TransferSucceeded { tx: TxId([0; 32]) }.key_at(),
            None
        );
    }

    #[test]
    fn queries_round_trip_through_json() {
        let q = Query::StorageValue {
            contract: AccountId::new(AccountKind::Contract, [2; 32]),
            slot: Slot::new("counter"),
            at: Position::new(3, 1),
        };
        let json = serde_json::to_string(&q).unwrap();
        assert_eq!(serde_json::from_str::<Query>(&json).unwrap(), q);
    }
}
