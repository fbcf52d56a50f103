//! Hash-linked blocks of admitted but unexecuted transactions.
//!
//! Admission checks form, signature, nonce and that the fee is covered by
//! zero-cost funds. Nothing here runs the VM.

mod persist;
mod zero_cost;

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use persist::PersistError;
pub use zero_cost::{zc_step, ZcStep, ZeroCostLedger};

use crate::keys::Keyring;
use crate::tx::{Malformed, Transaction};
use crate::txindex::InvertedIndex;
use crate::types::{sha256, AccountId, BlockHash, Position, TokenAmount, TxId, TxLocator};
use crate::vm::gas::GasTable;

/// Genesis supply must stay below this so that partial replays can track
/// unknown balances relative to a fixed base without overflow.
pub const MAX_SUPPLY: u64 = 1 << 60;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    height: u64,
    prev_hash: BlockHash,
    txs: Vec<Transaction>,
    /// Non-empty only in the genesis block.
    allocations: Vec<(AccountId, TokenAmount)>,
    block_hash: BlockHash,
}

impl Block {
    fn new(
        height: u64,
        prev_hash: BlockHash,
        txs: Vec<Transaction>,
        allocations: Vec<(AccountId, TokenAmount)>,
    ) -> Self {
        let block_hash = Self::compute_hash(height, &prev_hash, &txs, &allocations);
        Self {
            height,
            prev_hash,
            txs,
            allocations,
            block_hash,
        }
    }

    /// Covers height, parent, transaction ids and allocations. No state.
    pub fn compute_hash(
        height: u64,
        prev_hash: &BlockHash,
        txs: &[Transaction],
        allocations: &[(AccountId, TokenAmount)],
    ) -> BlockHash {
        let ids: Vec<TxId> = txs.iter().map(Transaction::id).collect();
        let bytes = bincode::serialize(&(height, prev_hash, &ids, allocations))
            .expect("block header serializes");
        BlockHash(sha256(&[b"block", &bytes]))
    }

    pub fn height(&self) -> u64 {
        self.height
    }

    pub fn prev_hash(&self) -> &BlockHash {
        &self.prev_hash
    }

    pub fn hash(&self) -> BlockHash {
        self.block_hash
    }

    pub fn txs(&self) -> &[Transaction] {
        &self.txs
    }

    pub fn allocations(&self) -> &[(AccountId, TokenAmount)] {
        &self.allocations
    }

    pub fn located_txs(&self) -> impl Iterator<Item = (TxLocator, &Transaction)> {
        self.txs.iter().enumerate().map(|(i, tx)| {
            (
                TxLocator {
                    height: self.height,
                    offset: i as u32,
                    tx_id: tx.id(),
                },
                tx,
            )
        })
    }

    /// A copy with a different parent and a recomputed hash, for tests that
    /// replay a block on the wrong chain.
    pub fn rebased(&self, prev_hash: BlockHash) -> Self {
        Self::new(
            self.height,
            prev_hash,
            self.txs.clone(),
            self.allocations.clone(),
        )
    }

    /// Assembles a block verbatim, keeping the given hash. Validation decides
    /// whether it is acceptable.
    pub fn from_parts(
        height: u64,
        prev_hash: BlockHash,
        txs: Vec<Transaction>,
        allocations: Vec<(AccountId, TokenAmount)>,
        block_hash: BlockHash,
    ) -> Self {
        Self {
            height,
            prev_hash,
            txs,
            allocations,
            block_hash,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GenesisError {
    #[error("genesis allocations are empty")]
    Empty,
    #[error("account {0:?} is allocated twice")]
    Duplicate(AccountId),
    #[error("allocation to {0:?} is zero")]
    ZeroAllocation(AccountId),
    #[error("allocation to {0:?} is not a user account")]
    NotUser(AccountId),
    #[error("genesis supply exceeds {MAX_SUPPLY}")]
    SupplyTooLarge,
}

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdmitError {
    #[error("malformed transaction: {0}")]
    Malformed(Malformed),
    #[error("bad signature")]
    BadSignature,
    #[error("bad nonce: expected {expected}, got {got}")]
    BadNonce { expected: u64, got: u64 },
    #[error("zero-cost balance {available} cannot cover fee {fee}")]
    InsufficientZeroCostFee {
        available: TokenAmount,
        fee: TokenAmount,
    },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("transaction {index} rejected: {reason}")]
pub struct SealError {
    pub index: usize,
    pub reason: AdmitError,
}

/// Outcome of re-checking a block. `reasons` is empty iff `valid`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BlockValidation {
    pub valid: bool,
    pub reasons: Vec<String>,
}

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("block {height} is invalid: {}", reasons.join("; "))]
    InvalidBlock { height: u64, reasons: Vec<String> },
    #[error("genesis: {0}")]
    Genesis(#[from] GenesisError),
    #[error(transparent)]
    Persist(#[from] PersistError),
}

pub struct Ledger {
    blocks: Vec<Block>,
    genesis: BTreeMap<AccountId, TokenAmount>,
    keyring: Arc<Keyring>,
    gas: GasTable,
    zc: ZeroCostLedger,
    nonces: HashMap<AccountId, u64>,
    locations: HashMap<TxId, TxLocator>,
    index: InvertedIndex,
}

impl Ledger {
    pub fn genesis(
        allocations: Vec<(AccountId, TokenAmount)>,
        keyring: Arc<Keyring>,
        gas: GasTable,
    ) -> Result<Self, GenesisError> {
        if allocations.is_empty() {
            return Err(GenesisError::Empty);
        }
        let mut genesis = BTreeMap::new();
        let mut supply = 0u64;
        for (account, amount) in &allocations {
            if !account.is_user() {
                return Err(GenesisError::NotUser(*account));
            }
            if amount.is_zero() {
                return Err(GenesisError::ZeroAllocation(*account));
            }
            if genesis.insert(*account, *amount).is_some() {
                return Err(GenesisError::Duplicate(*account));
            }
            supply = supply
                .checked_add(amount.0)
                .filter(|s| *s <= MAX_SUPPLY)
                .ok_or(GenesisError::SupplyTooLarge)?;
        }
        let sorted: Vec<_> = genesis.iter().map(|(a, v)| (*a, *v)).collect();
        let block = Block::new(0, BlockHash([0; 32]), Vec::new(), sorted);
        let mut index = InvertedIndex::new();
        index
            .index_block(&block)
            .expect("empty index accepts genesis");
        Ok(Self {
            blocks: vec![block],
            zc: ZeroCostLedger::from_genesis(&genesis),
            genesis,
            keyring,
            gas,
            nonces: HashMap::new(),
            locations: HashMap::new(),
            index,
        })
    }

    pub fn gas_table(&self) -> &GasTable {
        &self.gas
    }

    pub fn keyring(&self) -> &Arc<Keyring> {
        &self.keyring
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, height: u64) -> Option<&Block> {
        self.blocks.get(height as usize)
    }

    /// Height of the newest block.
    pub fn tip_height(&self) -> u64 {
        self.blocks.len() as u64 - 1
    }

    /// The boundary after the newest block.
    pub fn end(&self) -> Position {
        Position::after_block(self.tip_height())
    }

    pub fn genesis_allocations(&self) -> &BTreeMap<AccountId, TokenAmount> {
        &self.genesis
    }

    pub fn genesis_balance(&self, account: &AccountId) -> TokenAmount {
        self.genesis.get(account).copied().unwrap_or_default()
    }

    pub fn zero_cost(&self) -> &ZeroCostLedger {
        &self.zc
    }

    pub fn index(&self) -> &InvertedIndex {
        &self.index
    }

    /// Number of transactions `account` has sent on chain.
    pub fn sent_count(&self, account: &AccountId) -> u64 {
        self.nonces.get(account).copied().unwrap_or(0)
    }

    pub fn locate(&self, tx: &TxId) -> Option<TxLocator> {
        self.locations.get(tx).copied()
    }

    pub fn tx(&self, locator: &TxLocator) -> &Transaction {
        &self.blocks[locator.height as usize].txs[locator.offset as usize]
    }

    pub fn tx_count(&self) -> usize {
        self.locations.len()
    }

    /// Every committed transaction in chain order.
    pub fn located_txs(&self) -> impl Iterator<Item = (TxLocator, &Transaction)> {
        self.blocks.iter().flat_map(Block::located_txs)
    }

    /// Admission decision for `tx` as the next transaction on the chain.
    pub fn admit(&self, tx: &Transaction) -> Result<(), AdmitError> {
        self.builder().check(tx)
    }

    pub fn builder(&self) -> BlockBuilder<'_> {
        BlockBuilder {
            ledger: self,
            txs: Vec::new(),
            nonces: HashMap::new(),
            zc: HashMap::new(),
        }
    }

    /// Admits every transaction in order and appends the resulting block.
    pub fn seal_block(&mut self, pending: Vec<Transaction>) -> Result<&Block, SealError> {
        let mut builder = self.builder();
        for (index, tx) in pending.into_iter().enumerate() {
            builder
                .push(tx)
                .map_err(|reason| SealError { index, reason })?;
        }
        let block = builder.finish();
        self.commit(block);
        Ok(self.blocks.last().expect("just appended"))
    }

    /// Admits what it can and drops the rest, returning the rejections.
    pub fn seal_admissible(&mut self, pending: Vec<Transaction>) -> Vec<(usize, AdmitError)> {
        let mut builder = self.builder();
        let mut rejected = Vec::new();
        for (index, tx) in pending.into_iter().enumerate() {
            if let Err(reason) = builder.push(tx) {
                rejected.push((index, reason));
            }
        }
        let block = builder.finish();
        self.commit(block);
        rejected
    }

    /// Re-checks a block as the next block of this chain without executing
    /// anything.
    pub fn validate_block(&self, block: &Block) -> BlockValidation {
        let mut reasons = Vec::new();
        let expected_height = self.blocks.len() as u64;
        if block.height != expected_height {
            reasons.push(format!(
                "height {} does not extend tip {}",
                block.height,
                self.tip_height()
            ));
        }
        let tip = self.blocks.last().expect("genesis present").hash();
        if block.prev_hash != tip {
            reasons.push("prev_hash does not match the tip".to_string());
        }
        if !block.allocations.is_empty() {
            reasons.push("only genesis may allocate tokens".to_string());
        }
        if Block::compute_hash(
            block.height,
            &block.prev_hash,
            &block.txs,
            &block.allocations,
        ) != block.block_hash
        {
            reasons.push("block hash does not recompute".to_string());
        }
        let mut builder = self.builder();
        for (i, tx) in block.txs.iter().enumerate() {
            if let Err(e) = builder.push(tx.clone()) {
                reasons.push(format!("tx {i}: {e}"));
            }
        }
        BlockValidation {
            valid: reasons.is_empty(),
            reasons,
        }
    }

    /// Validates and appends a block produced elsewhere.
    pub fn append(&mut self, block: Block) -> Result<(), LedgerError> {
        let check = self.validate_block(&block);
        if !check.valid {
            return Err(LedgerError::InvalidBlock {
                height: block.height,
                reasons: check.reasons,
            });
        }
        self.commit(block);
        Ok(())
    }

    fn commit(&mut self, block: Block) {
        for (locator, tx) in block.located_txs() {
            self.zc.apply(tx, locator.position());
            *self.nonces.entry(tx.sender()).or_default() += 1;
            self.locations.insert(locator.tx_id, locator);
        }
        self.index
            .index_block(&block)
            .expect("blocks are committed in height order");
        log::debug!(
            "committed block {} with {} txs",
            block.height,
            block.txs.len()
        );
        self.blocks.push(block);
    }
}

/// Accumulates the next block, tracking nonces and zero-cost balances of
/// transactions admitted so far.
pub struct BlockBuilder<'a> {
    ledger: &'a Ledger,
    txs: Vec<Transaction>,
    nonces: HashMap<AccountId, u64>,
    zc: HashMap<AccountId, u64>,
}

impl BlockBuilder<'_> {
    fn zc_balance(&self, account: &AccountId) -> u64 {
        self.zc
            .get(account)
            .copied()
            .unwrap_or_else(|| self.ledger.zc.balance(account).0)
    }

    /// Nonce the next transaction from `account` must carry.
    pub fn expected_nonce(&self, account: &AccountId) -> u64 {
        self.nonces
            .get(account)
            .copied()
            .unwrap_or_else(|| self.ledger.sent_count(account))
    }

    /// Admission decision against the chain plus everything pushed so far.
    pub fn check(&self, tx: &Transaction) -> Result<(), AdmitError> {
        tx.check_form(&self.ledger.gas)
            .map_err(AdmitError::Malformed)?;
        if !self
            .ledger
            .keyring
            .verify(&tx.sender(), &tx.id(), tx.signature())
        {
            return Err(AdmitError::BadSignature);
        }
        let sender = tx.sender();
        let expected = self.expected_nonce(&sender);
        if tx.nonce() != expected {
            return Err(AdmitError::BadNonce {
                expected,
                got: tx.nonce(),
            });
        }
        let available = self.zc_balance(&sender);
        let fee = tx.fee_reservation();
        if available < fee.0 {
            return Err(AdmitError::InsufficientZeroCostFee {
                available: TokenAmount(available),
                fee,
            });
        }
        Ok(())
    }

    pub fn push(&mut self, tx: Transaction) -> Result<(), AdmitError> {
        self.check(&tx)?;
        let step = zc_step(&tx, |a| self.zc_balance(a));
        for (account, value) in step.updates {
            self.zc.insert(account, value);
        }
        let sender = tx.sender();
        self.nonces.insert(sender, tx.nonce() + 1);
        self.txs.push(tx);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.txs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.txs.is_empty()
    }

    pub fn finish(self) -> Block {
        let tip = self.ledger.blocks.last().expect("genesis present");
        Block::new(tip.height + 1, tip.hash(), self.txs, Vec::new())
    }
}
