//! Deterministic transaction execution: fee reservation, per-kind bodies,
//! whole-body rollback and refunds.

pub mod code;
pub mod gas;
pub mod interp;

use std::cell::Cell;
use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::query::{Query, QueryValue};
use crate::state::{DeployedContract, StateFault, StateStore};
use crate::tx::{Payload, Transaction, TxKind};
use crate::types::{AccountId, Gas, Position, StateKey, TokenAmount, TxId};
use code::Value;
use gas::GasTable;
use interp::{run_contract, Abort, CallContext};

thread_local! {
    static TXS_APPLIED: Cell<u64> = const { Cell::new(0) };
    static OPCODES: Cell<u64> = const { Cell::new(0) };
}

/// Per-thread execution tallies. Admission and sealing must leave both
/// untouched.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ExecCounters {
    pub txs_applied: u64,
    pub opcodes: u64,
}

impl ExecCounters {
    pub fn read() -> Self {
        Self {
            txs_applied: TXS_APPLIED.with(Cell::get),
            opcodes: OPCODES.with(Cell::get),
        }
    }

    /// Work done on this thread since `earlier` was read.
    pub fn since(earlier: ExecCounters) -> Self {
        let now = Self::read();
        Self {
            txs_applied: now.txs_applied - earlier.txs_applied,
            opcodes: now.opcodes - earlier.opcodes,
        }
    }
}

pub(crate) fn count_opcode() {
    OPCODES.with(|c| c.set(c.get() + 1));
}

fn count_tx() {
    TXS_APPLIED.with(|c| c.set(c.get() + 1));
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Error)]
pub enum RollbackReason {
    #[error("insufficient balance")]
    InsufficientBalance,
    #[error("write to undeclared key {0}")]
    UndeclaredWrite(StateKey),
    #[error("read of undeclared key {0}")]
    UndeclaredRead(StateKey),
    #[error("out of gas")]
    OutOfGas,
    #[error("stack underflow")]
    StackUnderflow,
    #[error("stack overflow")]
    StackOverflow,
    #[error("operand type mismatch")]
    TypeMismatch,
    #[error("arithmetic overflow")]
    ArithmeticOverflow,
    #[error("no contract at recipient")]
    NoSuchContract,
    #[error("oath sender is not the oath contract's creator")]
    NotOathOwner,
    #[error("oath query refers to a later position")]
    QueryFromFuture,
    #[error("oath query refers to an unknown transaction")]
    UnknownQueryTx,
    #[error("oath deposit cannot cover the penalty")]
    UnderfundedSlash,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TxStatus {
    Applied,
    RolledBack(RollbackReason),
    /// Sealed but not yet executed: only the fee reservation is known.
    FeeReservedOnly,
}

impl TxStatus {
    pub fn is_applied(&self) -> bool {
        matches!(self, TxStatus::Applied)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StateChange {
    pub key: StateKey,
    pub old: u64,
    pub new: u64,
}

impl StateChange {
    pub fn net(&self) -> i128 {
        i128::from(self.new) - i128::from(self.old)
    }
}

/// Effect record of one executed transaction.
///
/// `fee_charged + refund` always equals the fee reservation, and
/// `state_delta` is sorted by key and omits unchanged keys.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExecutionReceipt {
    pub tx_id: TxId,
    pub position: Position,
    pub sender: AccountId,
    pub kind: TxKind,
    pub outlay: TokenAmount,
    pub status: TxStatus,
    pub gas_used: Gas,
    pub fee_charged: TokenAmount,
    pub refund: TokenAmount,
    pub state_delta: Vec<StateChange>,
    pub deployed: Option<AccountId>,
    /// Penalty moved to the blackhole by an oath whose claim was false.
    pub slashed: Option<TokenAmount>,
}

impl ExecutionReceipt {
    /// Net change of one key, zero when the key is untouched.
    pub fn net_change(&self, key: &StateKey) -> i128 {
        self.state_delta
            .iter()
            .find(|c| &c.key == key)
            .map_or(0, StateChange::net)
    }

    /// Gas spent running contract code. Transfers and creations are plain
    /// balance arithmetic and count as zero.
    pub fn compute_gas(&self) -> Gas {
        if self.kind.runs_code() {
            self.gas_used
        } else {
            0
        }
    }

    /// The receipt with absolute values replaced by net changes, so that
    /// partial replays over unknown bases compare equal to full replays.
    pub fn effect_signature(&self) -> EffectSignature {
        EffectSignature {
            tx_id: self.tx_id,
            status: self.status.clone(),
            gas_used: self.gas_used,
            fee_charged: self.fee_charged,
            refund: self.refund,
            changes: self
                .state_delta
                .iter()
                .map(|c| (c.key.clone(), c.net()))
                .collect(),
            deployed: self.deployed,
            slashed: self.slashed,
        }
    }

    /// Receipt of a sealed transaction that has not been executed.
    pub fn fee_reserved_only(tx: &Transaction, position: Position) -> Self {
        Self {
            tx_id: tx.id(),
            position,
            sender: tx.sender(),
            kind: tx.kind(),
            outlay: tx.outlay(),
            status: TxStatus::FeeReservedOnly,
            gas_used: tx.gas_limit(),
            fee_charged: tx.fee_reservation(),
            refund: TokenAmount(0),
            state_delta: Vec::new(),
            deployed: None,
            slashed: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct EffectSignature {
    pub tx_id: TxId,
    pub status: TxStatus,
    pub gas_used: Gas,
    pub fee_charged: TokenAmount,
    pub refund: TokenAmount,
    pub changes: Vec<(StateKey, i128)>,
    pub deployed: Option<AccountId>,
    pub slashed: Option<TokenAmount>,
}

/// How much of the sender's state the caller can vouch for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExecMode {
    Full,
    /// The zero-cost ledger already proved that the sender covers fee and
    /// value, so the sender's balance is adjusted without being read.
    ZeroCostProven,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExecError {
    #[error("internal invariant violated: sender of {tx} cannot pay the reserved fee {fee} from {balance}")]
    FeeUnpayable {
        tx: TxId,
        fee: TokenAmount,
        balance: u64,
    },
    #[error("internal invariant violated: {0}")]
    Fault(#[from] StateFault),
}

/// Buffered writes over a base store. Reads are validated against the base
/// even when the overlay holds a newer value.
pub struct Overlay<'a, S: StateStore + ?Sized> {
    base: &'a S,
    writes: BTreeMap<StateKey, u64>,
    deploys: BTreeMap<AccountId, Arc<DeployedContract>>,
}

type OverlayParts = (
    BTreeMap<StateKey, u64>,
    BTreeMap<AccountId, Arc<DeployedContract>>,
);

impl<'a, S: StateStore + ?Sized> Overlay<'a, S> {
    pub fn new(base: &'a S) -> Self {
        Self {
            base,
            writes: BTreeMap::new(),
            deploys: BTreeMap::new(),
        }
    }

    fn into_parts(self) -> OverlayParts {
        (self.writes, self.deploys)
    }
}

impl<S: StateStore + ?Sized> StateStore for Overlay<'_, S> {
    fn read(&self, key: &StateKey) -> Result<u64, StateFault> {
        let base = self.base.read(key)?;
        Ok(match key {
            StateKey::Code(a) if self.deploys.contains_key(a) => 1,
            _ => self.writes.get(key).copied().unwrap_or(base),
        })
    }

    fn peek(&self, key: &StateKey) -> u64 {
        match key {
            StateKey::Code(a) if self.deploys.contains_key(a) => 1,
            _ => self
                .writes
                .get(key)
                .copied()
                .unwrap_or_else(|| self.base.peek(key)),
        }
    }

    fn write(&mut self, key: &StateKey, value: u64) {
        self.writes.insert(key.clone(), value);
    }

    fn contract(&self, id: &AccountId) -> Result<Option<Arc<DeployedContract>>, StateFault> {
        match self.deploys.get(id) {
            Some(c) => Ok(Some(c.clone())),
            None => self.base.contract(id),
        }
    }

    fn deploy(&mut self, id: AccountId, contract: Arc<DeployedContract>) {
        self.deploys.insert(id, contract);
    }

    fn value_before(&self, key: &StateKey, at: Position) -> Result<u64, StateFault> {
        self.base.value_before(key, at)
    }

    fn outcome_of(&self, tx: &TxId) -> Result<Option<bool>, StateFault> {
        self.base.outcome_of(tx)
    }
}

fn merge<S: StateStore + ?Sized>(target: &mut S, (writes, deploys): OverlayParts) {
    for (key, value) in writes {
        target.write(&key, value);
    }
    for (id, contract) in deploys {
        target.deploy(id, contract);
    }
}

/// Moves `amount` between balances. `trusted` skips the decision read of the
/// payer, for debits already proven affordable.
pub(crate) fn move_tokens<S: StateStore + ?Sized>(
    store: &mut S,
    from: &AccountId,
    to: &AccountId,
    amount: u64,
    trusted: bool,
) -> Result<(), Abort> {
    let from_key = StateKey::Balance(*from);
    let have = if trusted {
        store.peek(&from_key)
    } else {
        store.read(&from_key)?
    };
    let left = have
        .checked_sub(amount)
        .ok_or(RollbackReason::InsufficientBalance)?;
    store.write(&from_key, left);
    let to_key = StateKey::Balance(*to);
    let credited = store
        .peek(&to_key)
        .checked_add(amount)
        .ok_or(RollbackReason::ArithmeticOverflow)?;
    store.write(&to_key, credited);
    Ok(())
}

struct BodyEffects {
    deployed: Option<AccountId>,
    slashed: Option<TokenAmount>,
}

/// Executes one admitted transaction at `position` against `state`.
///
/// User-level failures become `RolledBack` receipts. An `Err` means the
/// caller broke an invariant: the fee was not affordable, or a partial state
/// was asked for a key outside its closure.
pub fn apply_tx<S: StateStore + ?Sized>(
    state: &mut S,
    tx: &Transaction,
    position: Position,
    gas: &GasTable,
    mode: ExecMode,
) -> Result<ExecutionReceipt, ExecError> {
    count_tx();
    let sender = tx.sender();
    let fee = tx.fee_reservation();
    let balance_key = StateKey::Balance(sender);
    let trusted = mode == ExecMode::ZeroCostProven;

    let mut outer = Overlay::new(&*state);
    let balance = if trusted {
        outer.peek(&balance_key)
    } else {
        outer.read(&balance_key)?
    };
    let after_fee = balance.checked_sub(fee.0).ok_or(ExecError::FeeUnpayable {
        tx: tx.id(),
        fee,
        balance,
    })?;
    outer.write(&balance_key, after_fee);
    let nonce_key = StateKey::Nonce(sender);
    outer.write(&nonce_key, outer.peek(&nonce_key) + 1);

    let mut body = Overlay::new(&outer);
    let (outcome, gas_used) = execute_body(&mut body, tx, position, gas, trusted);
    let parts = body.into_parts();
    let (status, effects) = match outcome {
        Ok(effects) => {
            merge(&mut outer, parts);
            (TxStatus::Applied, effects)
        }
        Err(Abort::Rollback(reason)) => (
            TxStatus::RolledBack(reason),
            BodyEffects {
                deployed: None,
                slashed: None,
            },
        ),
        Err(Abort::Fault(fault)) => return Err(fault.into()),
    };
    debug_assert!(gas_used <= tx.gas_limit());

    let price = tx.gas_price();
    let refund = price
        .checked_mul_gas(tx.gas_limit() - gas_used)
        .expect("bounded by the reservation");
    let fee_charged = fee.checked_sub(refund).expect("refund within reservation");
    if !refund.is_zero() {
        let credited = outer.peek(&balance_key) + refund.0;
        outer.write(&balance_key, credited);
    }

    let (writes, deploys) = outer.into_parts();
    let mut state_delta = Vec::with_capacity(writes.len() + deploys.len());
    for (key, new) in writes {
        let old = state.peek(&key);
        if old != new {
            state.write(&key, new);
            state_delta.push(StateChange { key, old, new });
        }
    }
    for (id, contract) in deploys {
        state.deploy(id, contract);
        state_delta.push(StateChange {
            key: StateKey::Code(id),
            old: 0,
            new: 1,
        });
    }
    state_delta.sort_by(|a, b| a.key.cmp(&b.key));

    Ok(ExecutionReceipt {
        tx_id: tx.id(),
        position,
        sender,
        kind: tx.kind(),
        outlay: tx.outlay(),
        status,
        gas_used,
        fee_charged,
        refund,
        state_delta,
        deployed: effects.deployed,
        slashed: effects.slashed,
    })
}

fn execute_body<S: StateStore + ?Sized>(
    store: &mut S,
    tx: &Transaction,
    position: Position,
    gas: &GasTable,
    trusted: bool,
) -> (Result<BodyEffects, Abort>, Gas) {
    let intrinsic = gas.intrinsic(tx.kind());
    let sender = tx.sender();
    let recipient = tx.recipient();
    let value = tx.value().0;
    let plain = BodyEffects {
        deployed: None,
        slashed: None,
    };
    match (tx.kind(), &tx.body().payload) {
        (TxKind::Transfer, _) => (
            move_tokens(store, &sender, &recipient, value, trusted).map(|()| plain),
            intrinsic,
        ),
        (TxKind::ContractCreate, Payload::Code(code)) => {
            let outcome = move_tokens(store, &sender, &recipient, value, trusted).map(|()| {
                store.deploy(
                    recipient,
                    Arc::new(DeployedContract {
                        creator: sender,
                        code: code.clone(),
                    }),
                );
                BodyEffects {
                    deployed: Some(recipient),
                    slashed: None,
                }
            });
            (outcome, intrinsic)
        }
        (TxKind::ContractCall, Payload::Args(args)) => {
            let contract = match load_contract(store, &recipient) {
                Ok(c) => c,
                Err(e) => return (Err(e), intrinsic),
            };
            if let Err(e) = move_tokens(store, &sender, &recipient, value, false) {
                return (Err(e), intrinsic);
            }
            let ctx = CallContext {
                contract: recipient,
                sender,
                nonce: tx.nonce(),
                declared: tx.declared(),
            };
            let budget = tx.gas_limit() - intrinsic;
            let (outcome, used) = run_contract(store, &ctx, &contract.code, args, budget, gas);
            (outcome.map(|()| plain), intrinsic + used)
        }
        (TxKind::OathCall, Payload::Oath(_)) => execute_oath(store, tx, position, gas),
        _ => unreachable!("payload checked at admission"),
    }
}

fn load_contract<S: StateStore + ?Sized>(
    store: &S,
    id: &AccountId,
) -> Result<Arc<DeployedContract>, Abort> {
    store.read(&StateKey::Code(*id))?;
    store
        .contract(id)?
        .ok_or(Abort::Rollback(RollbackReason::NoSuchContract))
}

/// Oath contracts are native: the creator tops up the deposit with the
/// transaction value, and a claim that disagrees with the query's true answer
/// forfeits the penalty to the blackhole. A deposit smaller than the penalty
/// rolls the whole claim back instead of slashing partially.
fn execute_oath<S: StateStore + ?Sized>(
    store: &mut S,
    tx: &Transaction,
    position: Position,
    gas: &GasTable,
) -> (Result<BodyEffects, Abort>, Gas) {
    let mut used = gas.intrinsic(TxKind::OathCall);
    let outcome = (|| {
        let sender = tx.sender();
        let oath = tx.recipient();
        let contract = load_contract(store, &oath)?;
        if contract.creator != sender {
            return Err(RollbackReason::NotOathOwner.into());
        }
        move_tokens(store, &sender, &oath, tx.value().0, false)?;
        let claim = tx.oath_claim().expect("oath payload");
        let truth = match &claim.query {
            Query::TransferSucceeded { tx: queried } => QueryValue::Bool(
                store
                    .outcome_of(queried)?
                    .ok_or(RollbackReason::UnknownQueryTx)?,
            ),
            query => {
                let (key, at) = query.key_at().expect("key-valued query");
                if at > position {
                    return Err(RollbackReason::QueryFromFuture.into());
                }
                query.answer_from_value(store.value_before(&key, at)?)
            }
        };
        if truth == claim.claimed {
            return Ok(BodyEffects {
                deployed: None,
                slashed: None,
            });
        }
        used += gas.transfer;
        if used > tx.gas_limit() {
            used = tx.gas_limit();
            return Err(RollbackReason::OutOfGas.into());
        }
        let deposit = store.read(&StateKey::Balance(oath))?;
        if deposit < claim.penalty.0 {
            return Err(RollbackReason::UnderfundedSlash.into());
        }
        move_tokens(store, &oath, &AccountId::BLACKHOLE, claim.penalty.0, false)?;
        Ok(BodyEffects {
            deployed: None,
            slashed: Some(claim.penalty),
        })
    })();
    (outcome, used)
}

/// Call arguments as stack values, for scenario tooling.
pub fn word_args(words: &[u64]) -> Vec<Value> {
    words.iter().map(|w| Value::Word(*w)).collect()
}
