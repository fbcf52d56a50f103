//! Inverted files from accounts and state keys to chain positions.

use std::collections::HashMap;

use serde::Serialize;
use thiserror::Error;

use crate::ledger::Block;
use crate::types::{AccountId, BlockHash, Position, StateKey, TokenAmount, TxLocator};

/// One transaction sent by an account.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SenderPosting {
    pub locator: TxLocator,
    /// Value plus fee reservation.
    pub outlay: TokenAmount,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IndexError {
    #[error("a different block is already indexed at height {0}")]
    DuplicateHeight(u64),
    #[error("expected block at height {expected}, got {got}")]
    OutOfOrder { expected: u64, got: u64 },
}

/// Postings are appended in chain order, so every list stays sorted.
#[derive(Clone, Debug, Default)]
pub struct InvertedIndex {
    by_sender: HashMap<AccountId, Vec<SenderPosting>>,
    /// Running outlay totals aligned with `by_sender`; entry `i` sums
    /// postings `0..=i`.
    expense_prefix: HashMap<AccountId, Vec<u128>>,
    by_key: HashMap<StateKey, Vec<TxLocator>>,
    blocks: Vec<BlockHash>,
}

impl InvertedIndex {
    pub fn new() -> Self {
        Self::default()
    }

    /// Indexes the next block. Re-indexing an already indexed block is a
    /// no-op.
    pub fn index_block(&mut self, block: &Block) -> Result<(), IndexError> {
        let height = block.height();
        let next = self.blocks.len() as u64;
        if height < next {
            return if self.blocks[height as usize] == block.hash() {
                Ok(())
            } else {
                Err(IndexError::DuplicateHeight(height))
            };
        }
        if height > next {
            return Err(IndexError::OutOfOrder {
                expected: next,
                got: height,
            });
        }
        for (locator, tx) in block.located_txs() {
            let outlay = tx.outlay();
            self.by_sender
                .entry(tx.sender())
                .or_default()
                .push(SenderPosting { locator, outlay });
            let prefix = self.expense_prefix.entry(tx.sender()).or_default();
            let total = prefix.last().copied().unwrap_or(0) + u128::from(outlay.0);
            prefix.push(total);
            for key in tx.write_keys() {
                self.by_key.entry(key).or_default().push(locator);
            }
        }
        self.blocks.push(block.hash());
        Ok(())
    }

    pub fn indexed_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Transactions sent by `account` strictly before `upto`.
    pub fn sent_by(&self, account: &AccountId, upto: Position) -> &[SenderPosting] {
        match self.by_sender.get(account) {
            Some(list) => &list[..list.partition_point(|p| p.locator.position() < upto)],
            None => &[],
        }
    }

    /// Sum of value and fee reservation over everything `account` sent
    /// strictly before `upto`.
    pub fn total_expenses(&self, account: &AccountId, upto: Position) -> u128 {
        let n = self.sent_by(account, upto).len();
        if n == 0 {
            return 0;
        }
        self.expense_prefix[account][n - 1]
    }

    /// Transactions strictly before `upto` that may write `key`.
    pub fn txs_touching(&self, key: &StateKey, upto: Position) -> &[TxLocator] {
        match self.by_key.get(key) {
            Some(list) => &list[..list.partition_point(|l| l.position() < upto)],
            None => &[],
        }
    }

    /// Every transaction that may write `key`, in chain order.
    pub fn postings(&self, key: &StateKey) -> &[TxLocator] {
        self.by_key.get(key).map_or(&[], Vec::as_slice)
    }
}
