//! Scenario files: a genesis, contract sources, a block schedule and the
//! questions to ask of the resulting chain. Running one produces a
//! deterministic [`RunReport`].

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::accounting::{
    audit_oath, incomes_of, maq_answer, pay_verify, select_theta, IncomeCase, MaqAnswer, OathAudit,
    PayDecision, PayVerdict,
};
use crate::attacks::{run_attack, AttackKind, AttackMetrics};
use crate::executor::{eager_execute, observe, Observation};
use crate::keys::{Keypair, Keyring};
use crate::ledger::{AdmitError, GenesisError, Ledger, LedgerError};
use crate::oracle::{differential_check, OracleReport};
use crate::query::{OathClaim, Query, QueryValue};
use crate::tx::{Transaction, TxBuilder, TxKind};
use crate::types::{AccountId, BlockHash, Gas, Position, Slot, StateKey, TokenAmount, TxId};
use crate::vm::code::{CodeError, ContractCode, Value};
use crate::vm::gas::{GasTable, ZeroGasEntry};
use crate::vm::{ExecError, TxStatus};

/// Name that always denotes the blackhole account.
pub const BLACKHOLE_NAME: &str = "blackhole";

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub seed: u64,
    /// User name to genesis balance.
    pub genesis: BTreeMap<String, u64>,
    /// Further users that start without funds.
    #[serde(default)]
    pub accounts: Vec<String>,
    #[serde(default)]
    pub gas_table: Option<GasTable>,
    /// Contract name to assembly source. A `create` transaction deploys it
    /// and binds the name to the new address.
    #[serde(default)]
    pub contracts: BTreeMap<String, String>,
    #[serde(default)]
    pub blocks: Vec<Vec<TxSpec>>,
    #[serde(default)]
    pub queries: Vec<QueryItem>,
    #[serde(default)]
    pub incomes: Vec<IncomeItem>,
    #[serde(default)]
    pub payments: Vec<PaymentItem>,
    #[serde(default)]
    pub maqs: Vec<MaqItem>,
    /// Labels of oath transactions to audit.
    #[serde(default)]
    pub audits: Vec<String>,
    #[serde(default)]
    pub attacks: Vec<AttackItem>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TxKindSpec {
    Transfer,
    Create,
    Call,
    Oath,
}

fn default_price() -> u64 {
    1
}

fn yes() -> bool {
    true
}

fn is_default_price(p: &u64) -> bool {
    *p == 1
}

fn is_true(b: &bool) -> bool {
    *b
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TxSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub kind: TxKindSpec,
    pub from: String,
    /// Transfer recipient, or the contract a call or oath targets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<String>,
    /// Contract definition deployed by a `create`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contract: Option<String>,
    #[serde(default)]
    pub value: u64,
    /// Defaults to the intrinsic cost plus, for calls, every opcode once.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gas_limit: Option<Gas>,
    #[serde(default = "default_price", skip_serializing_if = "is_default_price")]
    pub gas_price: u64,
    /// `balance:<name>` or `storage:<contract>:<slot>`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub declare: Vec<String>,
    /// For calls, also declare the keys the code names statically and the
    /// balances of account arguments.
    #[serde(default = "yes", skip_serializing_if = "is_true")]
    pub auto_declare: bool,
    /// Word literals, `@name` for any account, `%name` for a contract.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub args: Vec<String>,
    /// Overrides the next expected nonce.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nonce: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub claim: Option<ClaimSpec>,
}

impl TxSpec {
    pub fn new(kind: TxKindSpec, from: &str) -> Self {
        Self {
            label: None,
            kind,
            from: from.to_owned(),
            to: None,
            contract: None,
            value: 0,
            gas_limit: None,
            gas_price: 1,
            declare: Vec::new(),
            auto_declare: true,
            args: Vec::new(),
            nonce: None,
            claim: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClaimSpec {
    pub query: QuerySpec,
    pub claimed: ValueSpec,
    pub penalty: u64,
}

/// A chain position: the current chain end, the boundary after a block, or
/// the boundary just before or after a labelled transaction.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositionSpec {
    #[default]
    End,
    Block(u64),
    Before(String),
    After(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum QuerySpec {
    ExactBalance {
        account: String,
        #[serde(default)]
        at: PositionSpec,
    },
    BalanceAtLeast {
        account: String,
        amount: u64,
        #[serde(default)]
        at: PositionSpec,
    },
    TransferSucceeded {
        tx: String,
    },
    StorageValue {
        contract: String,
        slot: String,
        #[serde(default)]
        at: PositionSpec,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueSpec {
    Amount(u64),
    Bool(bool),
    Word(u64),
}

impl From<ValueSpec> for QueryValue {
    fn from(v: ValueSpec) -> Self {
        match v {
            ValueSpec::Amount(a) => QueryValue::Amount(TokenAmount(a)),
            ValueSpec::Bool(b) => QueryValue::Bool(b),
            ValueSpec::Word(w) => QueryValue::Word(w),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryItem {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub query: QuerySpec,
    /// Refuse closures whose gas limits exceed this.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<Gas>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IncomeItem {
    pub account: String,
    #[serde(default)]
    pub at: PositionSpec,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaKeyword {
    /// Cheapest sufficient income set, chosen by the knapsack solver.
    Auto,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ThetaSpec {
    Labels(Vec<String>),
    Keyword(ThetaKeyword),
}

impl Default for ThetaSpec {
    fn default() -> Self {
        ThetaSpec::Labels(Vec::new())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PaymentItem {
    pub payment: String,
    #[serde(default)]
    pub theta: ThetaSpec,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaqItem {
    pub query: QuerySpec,
    #[serde(default)]
    pub theta: Vec<String>,
}

fn default_q() -> u64 {
    1
}

fn default_victim() -> String {
    "victim".to_owned()
}

/// Attacks run on their own fixture chain, not on the scenario's chain.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackItem {
    pub kind: AttackKind,
    pub count: usize,
    #[serde(default)]
    pub burn: u64,
    #[serde(default = "default_q")]
    pub q: u64,
    #[serde(default = "default_victim")]
    pub victim: String,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario parse error at line {line}, column {column}: {msg}")]
    Parse {
        line: usize,
        column: usize,
        msg: String,
    },
    #[error("unknown account `{0}`")]
    UnknownAccount(String),
    #[error("unknown contract `{0}`")]
    UnknownContract(String),
    #[error("unknown contract definition `{0}`")]
    UnknownDefinition(String),
    #[error("unknown transaction label `{0}`")]
    UnknownLabel(String),
    #[error("transaction `{0}` was rejected at admission")]
    RejectedLabel(String),
    #[error("name `{0}` is defined twice")]
    DuplicateName(String),
    #[error("label `{0}` is defined twice")]
    DuplicateLabel(String),
    #[error("contract `{name}`: {source}")]
    BadCode { name: String, source: CodeError },
    #[error(transparent)]
    BadGasTable(#[from] ZeroGasEntry),
    #[error(transparent)]
    Genesis(#[from] GenesisError),
    #[error("block {block}, transaction {index}: {msg}")]
    BadTx {
        block: usize,
        index: usize,
        msg: String,
    },
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("oracle replay failed: {0}")]
    Exec(#[from] ExecError),
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
            line: e.line(),
            column: e.column(),
            msg: e.to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }
}

/// Account and contract names in scope while a scenario runs.
pub struct Names {
    users: BTreeMap<String, Keypair>,
    contracts: BTreeMap<String, AccountId>,
    code: HashMap<AccountId, ContractCode>,
    by_account: HashMap<AccountId, String>,
}

impl Names {
    fn new(seed: u64, users: impl IntoIterator<Item = String>) -> Result<Self, ScenarioError> {
        let mut names = Self {
            users: BTreeMap::new(),
            contracts: BTreeMap::new(),
            code: HashMap::new(),
            by_account: HashMap::from([(AccountId::BLACKHOLE, BLACKHOLE_NAME.to_owned())]),
        };
        for name in users {
            if name == BLACKHOLE_NAME || names.users.contains_key(&name) {
                return Err(ScenarioError::DuplicateName(name));
            }
            let key = Keypair::named(&name, seed);
            names.by_account.insert(key.account(), name.clone());
            names.users.insert(name, key);
        }
        Ok(names)
    }

    pub fn user(&self, name: &str) -> Result<&Keypair, ScenarioError> {
        self.users
            .get(name)
            .ok_or_else(|| ScenarioError::UnknownAccount(name.to_owned()))
    }

    pub fn contract(&self, name: &str) -> Result<AccountId, ScenarioError> {
        self.contracts
            .get(name)
            .copied()
            .ok_or_else(|| ScenarioError::UnknownContract(name.to_owned()))
    }

    /// A user, a deployed contract or the blackhole.
    pub fn account(&self, name: &str) -> Result<AccountId, ScenarioError> {
        if name == BLACKHOLE_NAME {
            return Ok(AccountId::BLACKHOLE);
        }
        if let Some(k) = self.users.get(name) {
            return Ok(k.account());
        }
        self.contract(name)
            .map_err(|_| ScenarioError::UnknownAccount(name.to_owned()))
    }

    pub fn name_of(&self, account: &AccountId) -> Option<&str> {
        self.by_account.get(account).map(String::as_str)
    }

    fn bind_contract(&mut self, name: &str, address: AccountId, code: ContractCode) {
        self.contracts.insert(name.to_owned(), address);
        self.code.insert(address, code);
        self.by_account.insert(address, name.to_owned());
    }

    fn keyring(&self) -> Keyring {
        let ring = Keyring::new();
        for key in self.users.values() {
            ring.register(key);
        }
        ring
    }

    /// Every name with its address, for reports.
    pub fn directory(&self) -> BTreeMap<String, AccountId> {
        self.users
            .iter()
            .map(|(n, k)| (n.clone(), k.account()))
            .chain(self.contracts.iter().map(|(n, a)| (n.clone(), *a)))
            .collect()
    }
}

/// Transaction labels and where the labelled transactions landed.
#[derive(Default)]
pub struct Labels {
    admitted: HashMap<String, (TxId, Position)>,
    rejected: HashMap<String, TxId>,
    by_id: HashMap<TxId, String>,
}

impl Labels {
    /// Id of a labelled transaction. Rejected transactions keep their id so
    /// that claims about them can still be made.
    pub fn tx(&self, label: &str) -> Result<TxId, ScenarioError> {
        if let Some(id) = self.rejected.get(label) {
            return Ok(*id);
        }
        self.entry(label).map(|(id, _)| id)
    }

    pub fn position(&self, label: &str) -> Result<Position, ScenarioError> {
        self.entry(label).map(|(_, p)| p)
    }

    fn entry(&self, label: &str) -> Result<(TxId, Position), ScenarioError> {
        if let Some(e) = self.admitted.get(label) {
            return Ok(*e);
        }
        if self.rejected.contains_key(label) {
            return Err(ScenarioError::RejectedLabel(label.to_owned()));
        }
        Err(ScenarioError::UnknownLabel(label.to_owned()))
    }

    pub fn label_of(&self, tx: &TxId) -> Option<&str> {
        self.by_id.get(tx).map(String::as_str)
    }

    fn claim(&self, label: &str) -> Result<(), ScenarioError> {
        if self.admitted.contains_key(label) || self.rejected.contains_key(label) {
            return Err(ScenarioError::DuplicateLabel(label.to_owned()));
        }
        Ok(())
    }
}

fn resolve_position(
    spec: &PositionSpec,
    end: Position,
    labels: &Labels,
) -> Result<Position, ScenarioError> {
    Ok(match spec {
        PositionSpec::End => end,
        PositionSpec::Block(h) => Position::after_block(*h),
        PositionSpec::Before(label) => labels.position(label)?,
        PositionSpec::After(label) => {
            let p = labels.position(label)?;
            Position::new(p.height, p.offset + 1)
        }
    })
}

fn resolve_query(
    spec: &QuerySpec,
    names: &Names,
    labels: &Labels,
    end: Position,
) -> Result<Query, ScenarioError> {
    let at = |p: &PositionSpec| resolve_position(p, end, labels);
    Ok(match spec {
        QuerySpec::ExactBalance { account, at: p } => Query::ExactBalance {
            account: names.account(account)?,
            at: at(p)?,
        },
        QuerySpec::BalanceAtLeast {
            account,
            amount,
            at: p,
        } => Query::BalanceAtLeast {
            account: names.account(account)?,
            amount: TokenAmount(*amount),
            at: at(p)?,
        },
        QuerySpec::TransferSucceeded { tx } => Query::TransferSucceeded { tx: labels.tx(tx)? },
        QuerySpec::StorageValue {
            contract,
            slot,
            at: p,
        } => Query::StorageValue {
            contract: names.contract(contract)?,
            slot: Slot::new(slot.as_str()),
            at: at(p)?,
        },
    })
}

fn resolve_declaration(text: &str, names: &Names) -> Result<StateKey, String> {
    let mut parts = text.splitn(3, ':');
    match (parts.next(), parts.next(), parts.next()) {
        (Some("balance"), Some(name), None) => names
            .account(name)
            .map(StateKey::Balance)
            .map_err(|e| e.to_string()),
        (Some("storage"), Some(contract), Some(slot)) => names
            .contract(contract)
            .map(|c| StateKey::Storage(c, Slot::new(slot)))
            .map_err(|e| e.to_string()),
        _ => Err(format!("bad declaration `{text}`")),
    }
}

fn resolve_arg(text: &str, names: &Names) -> Result<Value, String> {
    if let Some(name) = text.strip_prefix('@') {
        names
            .account(name)
            .map(Value::Account)
            .map_err(|e| e.to_string())
    } else if let Some(name) = text.strip_prefix('%') {
        names
            .contract(name)
            .map(Value::Account)
            .map_err(|e| e.to_string())
    } else {
        text.parse()
            .map(Value::Word)
            .map_err(|_| format!("bad argument `{text}`"))
    }
}

fn assemble(name: &str, source: &str, names: &Names) -> Result<ContractCode, ScenarioError> {
    ContractCode::assemble(source, |token| {
        let (sigil, rest) = token.split_at(1);
        match sigil {
            "%" => names.contract(rest).ok(),
            _ => names.account(rest).ok(),
        }
    })
    .map_err(|source| ScenarioError::BadCode {
        name: name.to_owned(),
        source,
    })
}

/// Everything needed to turn one [`TxSpec`] into a signed transaction.
struct TxContext<'a> {
    names: &'a Names,
    labels: &'a Labels,
    sources: &'a BTreeMap<String, String>,
    gas: &'a GasTable,
    chain_end: Position,
}

/// A signed transaction, plus the contract binding a `create` introduces.
struct Built {
    tx: Transaction,
    deploys: Option<(String, ContractCode)>,
}

fn build_tx(spec: &TxSpec, ctx: &TxContext<'_>, nonce: u64) -> Result<Built, String> {
    let names = ctx.names;
    let key = names.user(&spec.from).map_err(|e| e.to_string())?;
    let sender = key.account();
    let value = TokenAmount(spec.value);
    let target = |what: &str| {
        spec.to
            .as_deref()
            .ok_or_else(|| format!("{what} needs `to`"))
    };
    let mut declared = spec
        .declare
        .iter()
        .map(|d| resolve_declaration(d, names))
        .collect::<Result<Vec<_>, _>>()?;
    let mut deploys = None;
    let (builder, default_limit) = match spec.kind {
        TxKindSpec::Transfer => {
            let to = names
                .account(target("a transfer")?)
                .map_err(|e| e.to_string())?;
            (
                TxBuilder::transfer(sender, to, value),
                ctx.gas.intrinsic_transfer,
            )
        }
        TxKindSpec::Create => {
            let name = spec
                .contract
                .as_deref()
                .ok_or("a create needs `contract`")?;
            if names.contracts.contains_key(name) {
                return Err(ScenarioError::DuplicateName(name.to_owned()).to_string());
            }
            let source = ctx
                .sources
                .get(name)
                .ok_or_else(|| ScenarioError::UnknownDefinition(name.to_owned()).to_string())?;
            let code = assemble(name, source, names).map_err(|e| e.to_string())?;
            deploys = Some((name.to_owned(), code.clone()));
            (
                TxBuilder::create(sender, code, value),
                ctx.gas.intrinsic_create,
            )
        }
        TxKindSpec::Call => {
            let contract = names
                .contract(target("a call")?)
                .map_err(|e| e.to_string())?;
            let code = &names.code[&contract];
            let args = spec
                .args
                .iter()
                .map(|a| resolve_arg(a, names))
                .collect::<Result<Vec<_>, _>>()?;
            if spec.auto_declare {
                declared.extend(code.static_keys(contract));
                declared.extend(args.iter().filter_map(|a| match a {
                    Value::Account(x) => Some(StateKey::Balance(*x)),
                    Value::Word(_) => None,
                }));
            }
            let limit =
                ctx.gas.intrinsic_call + code.ops.iter().map(|op| ctx.gas.op_cost(op)).sum::<Gas>();
            (TxBuilder::call(sender, contract, args).value(value), limit)
        }
        TxKindSpec::Oath => {
            let contract = names
                .contract(target("an oath")?)
                .map_err(|e| e.to_string())?;
            let claim = spec.claim.as_ref().ok_or("an oath needs `claim`")?;
            let query = resolve_query(&claim.query, names, ctx.labels, ctx.chain_end)
                .map_err(|e| e.to_string())?;
            let claim = OathClaim {
                query,
                claimed: claim.claimed.into(),
                penalty: TokenAmount(claim.penalty),
            };
            (
                TxBuilder::oath(sender, contract, claim).value(value),
                ctx.gas.intrinsic_oath + ctx.gas.transfer,
            )
        }
    };
    let tx = builder
        .nonce(spec.nonce.unwrap_or(nonce))
        .gas(
            spec.gas_limit.unwrap_or(default_limit),
            TokenAmount(spec.gas_price),
        )
        .declare_all(declared)
        .sign(key);
    Ok(Built { tx, deploys })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TxEntry {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub tx: TxId,
    pub position: Position,
    pub kind: TxKind,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Rejection {
    pub index: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub reason: AdmitError,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BlockReport {
    pub height: u64,
    pub hash: BlockHash,
    pub valid: bool,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub invalid_reasons: Vec<String>,
    pub txs: Vec<TxEntry>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub rejected: Vec<Rejection>,
}

/// A sealed scenario chain with the names and labels used to build it.
pub struct Chain {
    pub ledger: Ledger,
    pub names: Names,
    pub labels: Labels,
    pub blocks: Vec<BlockReport>,
    pub seed: u64,
}

/// Seals the scenario's block schedule. Transactions failing admission are
/// left out of their block and reported.
pub fn build_chain(
    scenario: &Scenario,
    gas_override: Option<GasTable>,
    seed_override: Option<u64>,
) -> Result<Chain, ScenarioError> {
    let seed = seed_override.unwrap_or(scenario.seed);
    let gas = gas_override
        .or_else(|| scenario.gas_table.clone())
        .unwrap_or_default();
    gas.validate()?;
    let mut names = Names::new(
        seed,
        scenario.genesis.keys().chain(&scenario.accounts).cloned(),
    )?;
    for (name, source) in &scenario.contracts {
        if names.users.contains_key(name) || name == BLACKHOLE_NAME {
            return Err(ScenarioError::DuplicateName(name.clone()));
        }
        // Syntax only: names resolve once their contracts are deployed.
        ContractCode::assemble(source, |_| Some(AccountId::BLACKHOLE)).map_err(|source| {
            ScenarioError::BadCode {
                name: name.clone(),
                source,
            }
        })?;
    }
    let allocations = scenario
        .genesis
        .iter()
        .map(|(n, amount)| Ok((names.user(n)?.account(), TokenAmount(*amount))))
        .collect::<Result<Vec<_>, ScenarioError>>()?;
    let mut ledger = Ledger::genesis(allocations, Arc::new(names.keyring()), gas.clone())?;
    let mut labels = Labels::default();
    let mut reports = Vec::with_capacity(scenario.blocks.len());

    for (b, specs) in scenario.blocks.iter().enumerate() {
        let height = ledger.tip_height() + 1;
        let chain_end = ledger.end();
        let mut builder = ledger.builder();
        let mut txs = Vec::new();
        let mut rejected = Vec::new();
        for (index, spec) in specs.iter().enumerate() {
            if let Some(label) = &spec.label {
                labels.claim(label)?;
            }
            let ctx = TxContext {
                names: &names,
                labels: &labels,
                sources: &scenario.contracts,
                gas: &gas,
                chain_end,
            };
            let sender = names.user(&spec.from)?.account();
            let built = build_tx(spec, &ctx, builder.expected_nonce(&sender)).map_err(|msg| {
                ScenarioError::BadTx {
                    block: b,
                    index,
                    msg,
                }
            })?;
            let tx_id = built.tx.id();
            let recipient = built.tx.recipient();
            let kind = built.tx.kind();
            let position = Position::new(height, builder.len() as u32);
            match builder.push(built.tx) {
                Ok(()) => {
                    if let Some((name, code)) = built.deploys {
                        names.bind_contract(&name, recipient, code);
                    }
                    if let Some(label) = &spec.label {
                        labels.admitted.insert(label.clone(), (tx_id, position));
                        labels.by_id.insert(tx_id, label.clone());
                    }
                    txs.push(TxEntry {
                        label: spec.label.clone(),
                        tx: tx_id,
                        position,
                        kind,
                    });
                }
                Err(reason) => {
                    log::debug!("block {height}: rejected transaction {index}: {reason}");
                    if let Some(label) = &spec.label {
                        labels.rejected.insert(label.clone(), tx_id);
                    }
                    rejected.push(Rejection {
                        index,
                        label: spec.label.clone(),
                        reason,
                    });
                }
            }
        }
        let block = builder.finish();
        let validation = ledger.validate_block(&block);
        let hash = block.hash();
        ledger.append(block)?;
        reports.push(BlockReport {
            height,
            hash,
            valid: validation.valid,
            invalid_reasons: validation.reasons,
            txs,
            rejected,
        });
    }
    Ok(Chain {
        ledger,
        names,
        labels,
        blocks: reports,
        seed,
    })
}

/// A result or the reason there is none.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome<T> {
    Ok(T),
    Error(String),
}

impl<T> Outcome<T> {
    pub fn ok(&self) -> Option<&T> {
        match self {
            Outcome::Ok(v) => Some(v),
            Outcome::Error(_) => None,
        }
    }
}

impl<T, E: std::fmt::Display> From<Result<T, E>> for Outcome<T> {
    fn from(r: Result<T, E>) -> Self {
        match r {
            Ok(v) => Outcome::Ok(v),
            Err(e) => Outcome::Error(e.to_string()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct QueryReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub query: QuerySpec,
    pub outcome: Outcome<Observation>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct IncomeEntry {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub tx: TxId,
    pub position: Position,
    pub amount: TokenAmount,
    pub case: IncomeCase,
    pub income_cost: Gas,
    pub zero_cost: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct IncomesReport {
    pub account: String,
    pub at: PositionSpec,
    pub outcome: Outcome<Vec<IncomeEntry>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PaymentReport {
    pub payment: String,
    /// Labels (or ids of unlabelled transactions) of the incomes presented.
    pub theta: Vec<String>,
    pub outcome: Outcome<PayVerdict>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MaqReport {
    pub query: QuerySpec,
    pub theta: Vec<String>,
    pub outcome: Outcome<MaqAnswer>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AuditReport {
    pub oath: String,
    pub outcome: Outcome<OathAudit>,
}

/// What eager execution says about each labelled transaction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ReceiptSummary {
    pub label: String,
    pub tx: TxId,
    pub status: TxStatus,
    pub gas_used: Gas,
    pub fee_charged: TokenAmount,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OracleSection {
    pub check: OracleReport,
    pub receipts: Vec<ReceiptSummary>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RunReport {
    pub seed: u64,
    pub gas_table_digest: String,
    pub accounts: BTreeMap<String, AccountId>,
    pub blocks: Vec<BlockReport>,
    pub queries: Vec<QueryReport>,
    pub incomes: Vec<IncomesReport>,
    pub payments: Vec<PaymentReport>,
    pub maqs: Vec<MaqReport>,
    pub audits: Vec<AuditReport>,
    pub attacks: Vec<Outcome<AttackMetrics>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSection>,
    pub invariant_violations: Vec<String>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// No invariant violated and, when the oracle ran, no difference found.
    pub fn is_clean(&self) -> bool {
        self.invariant_violations.is_empty()
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub oracle: bool,
    pub gas_table: Option<GasTable>,
    pub seed: Option<u64>,
}

impl Chain {
    /// Resolves names and labels, with `end` meaning the chain end.
    pub fn resolve_query(&self, spec: &QuerySpec) -> Result<Query, ScenarioError> {
        resolve_query(spec, &self.names, &self.labels, self.ledger.end())
    }

    /// The label of `tx`, or its id when unlabelled.
    pub fn display(&self, tx: &TxId) -> String {
        self.labels
            .label_of(tx)
            .map_or_else(|| tx.to_hex(), str::to_owned)
    }

    /// Cheapest income set proving `payment`, from the sender's catalogue.
    pub fn auto_theta(&self, payment: &TxId) -> Result<Vec<TxId>, String> {
        let ledger = &self.ledger;
        let locator = ledger
            .locate(payment)
            .ok_or_else(|| format!("payment {payment} is not on chain"))?;
        let tx = ledger.tx(&locator);
        let sender = tx.sender();
        let at = locator.position();
        let catalog = incomes_of(ledger, &sender, at).map_err(|e| e.to_string())?;
        let expenses =
            ledger.index().total_expenses(&sender, at) + u128::from(tx.fee_reservation().0);
        match select_theta(
            tx.value(),
            &catalog,
            expenses,
            ledger.genesis_balance(&sender),
        ) {
            Ok(chosen) => Ok(chosen.iter().map(|r| r.tx.tx_id).collect()),
            // Nothing suffices; the empty proof lets the verifier reject.
            Err(_) => Ok(Vec::new()),
        }
    }

    fn theta_ids(&self, labels: &[String]) -> Result<Vec<TxId>, ScenarioError> {
        labels.iter().map(|l| self.labels.tx(l)).collect()
    }
}

/// Runs the scenario's schedule and every question it lists.
pub fn run(scenario: &Scenario, options: &RunOptions) -> Result<RunReport, ScenarioError> {
    let chain = build_chain(scenario, options.gas_table.clone(), options.seed)?;
    let ledger = &chain.ledger;
    let end = ledger.end();
    let mut violations: Vec<String> = chain
        .blocks
        .iter()
        .filter(|b| !b.valid)
        .map(|b| format!("block {} failed validation", b.height))
        .collect();
    let eager = if options.oracle {
        Some(eager_execute(ledger, end)?)
    } else {
        None
    };

    let mut queries = Vec::new();
    for item in &scenario.queries {
        let outcome = match resolve_query(&item.query, &chain.names, &chain.labels, end) {
            Ok(query) => {
                let observed = observe(ledger, &query, item.budget);
                if let (Some(eager), Ok(obs)) = (&eager, &observed) {
                    if eager.answer(&query) != Some(obs.result) {
                        violations.push(format!(
                            "query {:?}: lazy {:?} differs from the oracle {:?}",
                            item.query,
                            obs.result,
                            eager.answer(&query)
                        ));
                    }
                }
                observed.into()
            }
            Err(e @ ScenarioError::RejectedLabel(_)) => Outcome::Error(e.to_string()),
            Err(e) => return Err(e),
        };
        queries.push(QueryReport {
            label: item.label.clone(),
            query: item.query.clone(),
            outcome,
        });
    }

    let mut incomes = Vec::new();
    for item in &scenario.incomes {
        let account = chain.names.account(&item.account)?;
        let at = resolve_position(&item.at, end, &chain.labels)?;
        let outcome = incomes_of(ledger, &account, at)
            .map(|records| {
                records
                    .into_iter()
                    .map(|r| IncomeEntry {
                        label: chain.labels.label_of(&r.tx.tx_id).map(str::to_owned),
                        tx: r.tx.tx_id,
                        position: r.tx.position(),
                        amount: r.amount,
                        case: r.case,
                        income_cost: r.income_cost,
                        zero_cost: r.zero_cost,
                    })
                    .collect()
            })
            .into();
        incomes.push(IncomesReport {
            account: item.account.clone(),
            at: item.at.clone(),
            outcome,
        });
    }

    let mut payments = Vec::new();
    for item in &scenario.payments {
        let payment = match chain.labels.tx(&item.payment) {
            Ok(id) => id,
            Err(e @ ScenarioError::RejectedLabel(_)) => {
                payments.push(PaymentReport {
                    payment: item.payment.clone(),
                    theta: Vec::new(),
                    outcome: Outcome::Error(e.to_string()),
                });
                continue;
            }
            Err(e) => return Err(e),
        };
        let theta = match &item.theta {
            ThetaSpec::Labels(labels) => chain.theta_ids(labels)?,
            ThetaSpec::Keyword(ThetaKeyword::Auto) => {
                chain.auto_theta(&payment).unwrap_or_default()
            }
        };
        let verdict = pay_verify(ledger, &payment, &theta);
        if let (Some(eager), Ok(v)) = (&eager, &verdict) {
            if v.decision == PayDecision::Accept && eager.state.outcome(&payment) != Some(true) {
                violations.push(format!(
                    "payment {} accepted but the oracle shows it rolled back",
                    item.payment
                ));
            }
        }
        payments.push(PaymentReport {
            payment: item.payment.clone(),
            theta: theta.iter().map(|t| chain.display(t)).collect(),
            outcome: verdict.into(),
        });
    }

    let mut maqs = Vec::new();
    for item in &scenario.maqs {
        let theta = chain.theta_ids(&item.theta)?;
        let outcome = match resolve_query(&item.query, &chain.names, &chain.labels, end) {
            Ok(query) => {
                let answer = maq_answer(ledger, &query, &theta);
                if let (Some(eager), Ok(a)) = (&eager, &answer) {
                    if a.answer && eager.answer(&query) != Some(QueryValue::Bool(true)) {
                        violations.push(format!(
                            "minimal query {:?} answered yes against the oracle",
                            item.query
                        ));
                    }
                }
                answer.into()
            }
            Err(e @ ScenarioError::RejectedLabel(_)) => Outcome::Error(e.to_string()),
            Err(e) => return Err(e),
        };
        maqs.push(MaqReport {
            query: item.query.clone(),
            theta: item.theta.clone(),
            outcome,
        });
    }

    let mut audits = Vec::new();
    for label in &scenario.audits {
        let outcome = match chain.labels.tx(label) {
            Ok(tx) => audit_oath(ledger, &tx).into(),
            Err(e @ ScenarioError::RejectedLabel(_)) => Outcome::Error(e.to_string()),
            Err(e) => return Err(e),
        };
        audits.push(AuditReport {
            oath: label.clone(),
            outcome,
        });
    }

    let attacks = scenario
        .attacks
        .iter()
        .map(|a| {
            run_attack(
                a.kind,
                a.count,
                a.burn,
                TokenAmount(a.q),
                &a.victim,
                chain.seed,
            )
            .map(|run| run.metrics)
            .into()
        })
        .collect();

    let oracle = match &eager {
        Some(eager) => {
            let check = differential_check(ledger)?;
            violations.extend(check.violations());
            let mut receipts: Vec<ReceiptSummary> = chain
                .labels
                .admitted
                .iter()
                .filter_map(|(label, (tx, _))| {
                    eager.receipt(tx).map(|r| ReceiptSummary {
                        label: label.clone(),
                        tx: *tx,
                        status: r.status.clone(),
                        gas_used: r.gas_used,
                        fee_charged: r.fee_charged,
                    })
                })
                .collect();
            receipts.sort_by_key(|r| chain.labels.admitted[&r.label].1);
            Some(OracleSection { check, receipts })
        }
        None => None,
    };

    Ok(RunReport {
        seed: chain.seed,
        gas_table_digest: hex::encode(ledger.gas_table().digest()),
        accounts: chain.names.directory(),
        blocks: chain.blocks.clone(),
        queries,
        incomes,
        payments,
        maqs,
        audits,
        attacks,
        oracle,
        invariant_violations: violations,
    })
}
