//! Signed, fee-bearing transactions with declared write sets.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::keys::Keypair;
use crate::query::{OathClaim, Query};
use crate::types::{sha256, AccountId, Gas, Position, Signature, StateKey, TokenAmount, TxId};
use crate::vm::code::{ContractCode, Value};
use crate::vm::gas::GasTable;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TxKind {
    Transfer,
    ContractCreate,
    ContractCall,
    OathCall,
}

impl TxKind {
    /// Whether executing the transaction runs contract logic, as opposed to
    /// plain balance arithmetic.
    pub fn runs_code(self) -> bool {
        matches!(self, TxKind::ContractCall | TxKind::OathCall)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Payload {
    Empty,
    Code(ContractCode),
    /// Values pushed onto the stack, in order, before the contract runs.
    Args(Vec<Value>),
    Oath(OathClaim),
}

/// Everything the signature and the transaction id cover.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TxBody {
    pub sender: AccountId,
    pub nonce: u64,
    pub kind: TxKind,
    pub recipient: AccountId,
    pub value: TokenAmount,
    pub gas_limit: Gas,
    pub gas_price: TokenAmount,
    pub payload: Payload,
    pub declared_write_set: BTreeSet<StateKey>,
}

impl TxBody {
    pub fn id(&self) -> TxId {
        let bytes = bincode::serialize(self).expect("transaction body serializes");
        TxId(sha256(&[b"tx", &bytes]))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Transaction {
    body: TxBody,
    tx_id: TxId,
    signature: Signature,
}

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Malformed {
    #[error("sender {0:?} is not a user account")]
    SenderNotUser(AccountId),
    #[error("transaction id does not match its contents")]
    IdMismatch,
    #[error("gas limit {limit} is below the intrinsic cost {intrinsic}")]
    GasBelowIntrinsic { limit: Gas, intrinsic: Gas },
    #[error("gas price must be positive")]
    ZeroGasPrice,
    #[error("fee reservation overflows")]
    FeeOverflow,
    #[error("declared write set misses {0}")]
    MissingDeclaration(StateKey),
    #[error("declared key {0} is not allowed")]
    BadDeclaration(StateKey),
    #[error("payload does not match the transaction kind")]
    PayloadMismatch,
    #[error("contract address does not derive from sender and nonce")]
    BadContractAddress,
    #[error("recipient {0:?} cannot receive this kind of transaction")]
    BadRecipient(AccountId),
    #[error("invalid contract code: {0}")]
    BadCode(String),
}

impl Transaction {
    /// Signs `body` after completing its declared write set with the keys
    /// every transaction of its kind must declare.
    pub fn sign(mut body: TxBody, keypair: &Keypair) -> Self {
        body.declared_write_set.extend(required_declarations(&body));
        let tx_id = body.id();
        let signature = keypair.sign(&tx_id);
        Self {
            body,
            tx_id,
            signature,
        }
    }

    /// Assembles a transaction from parts without completing or checking
    /// anything. Used for deserialization tests and forged inputs.
    pub fn from_parts(body: TxBody, tx_id: TxId, signature: Signature) -> Self {
        Self {
            body,
            tx_id,
            signature,
        }
    }

    pub fn body(&self) -> &TxBody {
        &self.body
    }

    pub fn id(&self) -> TxId {
        self.tx_id
    }

    pub fn signature(&self) -> &Signature {
        &self.signature
    }

    pub fn sender(&self) -> AccountId {
        self.body.sender
    }

    pub fn recipient(&self) -> AccountId {
        self.body.recipient
    }

    pub fn nonce(&self) -> u64 {
        self.body.nonce
    }

    pub fn kind(&self) -> TxKind {
        self.body.kind
    }

    pub fn value(&self) -> TokenAmount {
        self.body.value
    }

    pub fn gas_limit(&self) -> Gas {
        self.body.gas_limit
    }

    pub fn gas_price(&self) -> TokenAmount {
        self.body.gas_price
    }

    pub fn declared(&self) -> &BTreeSet<StateKey> {
        &self.body.declared_write_set
    }

    /// `gas_limit × gas_price`, reserved from the sender before execution.
    /// Callers must have checked the form first.
    pub fn fee_reservation(&self) -> TokenAmount {
        self.body
            .gas_price
            .checked_mul_gas(self.body.gas_limit)
            .expect("fee reservation checked at admission")
    }

    /// Tokens this transaction counts as an expense of its sender.
    pub fn outlay(&self) -> TokenAmount {
        self.fee_reservation()
            .checked_add(self.body.value)
            .unwrap_or(TokenAmount(u64::MAX))
    }

    pub fn oath_claim(&self) -> Option<&OathClaim> {
        match &self.body.payload {
            Payload::Oath(claim) => Some(claim),
            _ => None,
        }
    }

    /// Every key the transaction may write. The index posts the transaction
    /// under each of these.
    pub fn write_keys(&self) -> BTreeSet<StateKey> {
        let mut keys = self.body.declared_write_set.clone();
        keys.insert(StateKey::Nonce(self.body.sender));
        if self.body.kind == TxKind::ContractCreate {
            keys.insert(StateKey::Code(self.body.recipient));
        }
        keys
    }

    /// Keys whose prior value can change the transaction's outcome.
    ///
    /// Keys that are only credited (a transfer recipient, a contract payout
    /// target) are not dependencies: crediting does not depend on the old
    /// balance. Query dependencies of oath claims are separate, see
    /// [`Transaction::query_dependency`].
    pub fn read_keys(&self) -> BTreeSet<StateKey> {
        let sender = self.body.sender;
        let mut keys = BTreeSet::from([StateKey::Balance(sender), StateKey::Nonce(sender)]);
        if self.body.kind.runs_code() {
            let contract = self.body.recipient;
            keys.insert(StateKey::Code(contract));
            keys.insert(StateKey::Balance(contract));
            keys.extend(
                self.body
                    .declared_write_set
                    .iter()
                    .filter(|k| matches!(k, StateKey::Storage(c, _) if *c == contract))
                    .cloned(),
            );
        }
        keys
    }

    /// What an oath claim needs to evaluate its query: the query key at the
    /// query position, or the outcome of an earlier transaction.
    pub fn query_dependency(&self) -> Option<QueryDependency> {
        let claim = self.oath_claim()?;
        Some(match &claim.query {
            Query::TransferSucceeded { tx } => QueryDependency::Outcome(*tx),
            q => {
                let (key, at) = q.key_at().expect("key-valued query");
                QueryDependency::Key(key, at)
            }
        })
    }

    /// Structural checks that need no chain state.
    pub fn check_form(&self, gas: &GasTable) -> Result<(), Malformed> {
        let body = &self.body;
        if !body.sender.is_user() {
            return Err(Malformed::SenderNotUser(body.sender));
        }
        if body.id() != self.tx_id {
            return Err(Malformed::IdMismatch);
        }
        let intrinsic = gas.intrinsic(body.kind);
        if body.gas_limit < intrinsic {
            return Err(Malformed::GasBelowIntrinsic {
                limit: body.gas_limit,
                intrinsic,
            });
        }
        if body.gas_price.is_zero() {
            return Err(Malformed::ZeroGasPrice);
        }
        let fee = body
            .gas_price
            .checked_mul_gas(body.gas_limit)
            .ok_or(Malformed::FeeOverflow)?;
        fee.checked_add(body.value).ok_or(Malformed::FeeOverflow)?;
        for key in required_declarations(body) {
            if !body.declared_write_set.contains(&key) {
                return Err(Malformed::MissingDeclaration(key));
            }
        }
        for key in &body.declared_write_set {
            let ok = match key {
                StateKey::Balance(_) => true,
                StateKey::Storage(c, _) => c.is_contract(),
                StateKey::Nonce(_) | StateKey::Code(_) => false,
            };
            if !ok {
                return Err(Malformed::BadDeclaration(key.clone()));
            }
        }
        match (body.kind, &body.payload) {
            (TxKind::Transfer, Payload::Empty) => {}
            (TxKind::ContractCreate, Payload::Code(code)) => {
                code.validate()
                    .map_err(|e| Malformed::BadCode(e.to_string()))?;
                if body.recipient != AccountId::contract(&body.sender, body.nonce) {
                    return Err(Malformed::BadContractAddress);
                }
            }
            (TxKind::ContractCall, Payload::Args(_)) | (TxKind::OathCall, Payload::Oath(_)) => {
                if !body.recipient.is_contract() {
                    return Err(Malformed::BadRecipient(body.recipient));
                }
            }
            _ => return Err(Malformed::PayloadMismatch),
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum QueryDependency {
    Key(StateKey, Position),
    Outcome(TxId),
}

fn required_declarations(body: &TxBody) -> Vec<StateKey> {
    let mut keys = vec![
        StateKey::Balance(body.sender),
        StateKey::Balance(body.recipient),
    ];
    if body.kind == TxKind::OathCall {
        keys.push(StateKey::Balance(AccountId::BLACKHOLE));
    }
    keys
}

/// Convenience constructor for transaction bodies.
#[derive(Clone, Debug)]
pub struct TxBuilder {
    body: TxBody,
}

impl TxBuilder {
    fn new(kind: TxKind, sender: AccountId, recipient: AccountId, payload: Payload) -> Self {
        Self {
            body: TxBody {
                sender,
                nonce: 0,
                kind,
                recipient,
                value: TokenAmount::ZERO,
                gas_limit: 0,
                gas_price: TokenAmount(1),
                payload,
                declared_write_set: BTreeSet::new(),
            },
        }
    }

    pub fn transfer(sender: AccountId, recipient: AccountId, value: TokenAmount) -> Self {
        Self::new(TxKind::Transfer, sender, recipient, Payload::Empty).value(value)
    }

    /// Deploys `code`; the contract address follows from sender and nonce,
    /// so the recipient is filled in by [`TxBuilder::build`].
    pub fn create(sender: AccountId, code: ContractCode, endowment: TokenAmount) -> Self {
        Self::new(
            TxKind::ContractCreate,
            sender,
            AccountId::BLACKHOLE,
            Payload::Code(code),
        )
        .value(endowment)
    }

    pub fn call(sender: AccountId, contract: AccountId, args: Vec<Value>) -> Self {
        Self::new(TxKind::ContractCall, sender, contract, Payload::Args(args))
    }

    pub fn oath(sender: AccountId, contract: AccountId, claim: OathClaim) -> Self {
        Self::new(TxKind::OathCall, sender, contract, Payload::Oath(claim))
    }

    pub fn nonce(mut self, nonce: u64) -> Self {
        self.body.nonce = nonce;
        self
    }

    pub fn value(mut self, value: TokenAmount) -> Self {
        self.body.value = value;
        self
    }

    pub fn gas(mut self, limit: Gas, price: TokenAmount) -> Self {
        self.body.gas_limit = limit;
        self.body.gas_price = price;
        self
    }

    pub fn declare(mut self, key: StateKey) -> Self {
        self.body.declared_write_set.insert(key);
        self
    }

    pub fn declare_all(mut self, keys: impl IntoIterator<Item = StateKey>) -> Self {
        self.body.declared_write_set.extend(keys);
        self
    }

    pub fn build(mut self) -> TxBody {
        if self.body.kind == TxKind::ContractCreate {
            self.body.recipient = AccountId::contract(&self.body.sender, self.body.nonce);
        }
        self.body
    }

    pub fn sign(self, keypair: &Keypair) -> Transaction {
        Transaction::sign(self.build(), keypair)
    }
}
