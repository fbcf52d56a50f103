use serde::Serialize;
use thiserror::Error;

use super::CostReport;
use crate::executor::{dependency_closure, execute_closure, Prune, Seed};
use crate::keys::Keypair;
use crate::ledger::Ledger;
use crate::query::{OathClaim, Query, QueryValue};
use crate::tx::{Transaction, TxBuilder};
use crate::types::{AccountId, Gas, TokenAmount, TxId};
use crate::vm::code::{ContractCode, Opcode};
use crate::vm::{ExecError, RollbackReason, TxStatus};

/// Deploys an oath contract owned by `accountant`, endowed with `deposit`.
pub fn oath_contract(
    accountant: &Keypair,
    nonce: u64,
    deposit: TokenAmount,
    gas_limit: Gas,
    gas_price: TokenAmount,
) -> Transaction {
    let code = ContractCode::new(vec![Opcode::Halt]).expect("valid code");
    TxBuilder::create(accountant.account(), code, deposit)
        .nonce(nonce)
        .gas(gas_limit, gas_price)
        .sign(accountant)
}

/// An oath vouching that `query` evaluates to `claimed`, staking `penalty`.
#[allow(clippy::too_many_arguments)]
pub fn oath_claim(
    accountant: &Keypair,
    oath: AccountId,
    nonce: u64,
    query: Query,
    claimed: QueryValue,
    penalty: TokenAmount,
    gas_limit: Gas,
    gas_price: TokenAmount,
) -> Transaction {
    let claim = OathClaim {
        query,
        claimed,
        penalty,
    };
    TxBuilder::oath(accountant.account(), oath, claim)
        .nonce(nonce)
        .gas(gas_limit, gas_price)
        .sign(accountant)
}

/// The claimed answer, read from the transaction without executing anything.
pub fn read_claim(tx: &Transaction) -> Option<&OathClaim> {
    tx.oath_claim()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum OathVerdict {
    Honest,
    Slashed(TokenAmount),
    /// The claim was false but the deposit could not cover the penalty.
    UnderfundedSlash,
    /// The oath rolled back for another reason and asserted nothing.
    Void(RollbackReason),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OathAudit {
    pub tx: TxId,
    pub claimed: QueryValue,
    /// True answer, when the query could be evaluated.
    pub truth: Option<QueryValue>,
    pub verdict: OathVerdict,
    pub cost: CostReport,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AuditError {
    #[error("transaction {0} is not on chain")]
    UnknownTx(TxId),
    #[error("transaction {0} is not an oath")]
    NotAnOath(TxId),
    #[error(transparent)]
    Exec(#[from] ExecError),
}

/// Executes the closure of an oath transaction, which includes the closure
/// of its query, and reports what the canonical execution did.
pub fn audit_oath(ledger: &Ledger, tx: &TxId) -> Result<OathAudit, AuditError> {
    let locator = ledger.locate(tx).ok_or(AuditError::UnknownTx(*tx))?;
    let oath = ledger.tx(&locator);
    let claim = oath.oath_claim().ok_or(AuditError::NotAnOath(*tx))?;
    let closure = dependency_closure(ledger, &[Seed::Tx(locator)], Prune::None);
    let run = execute_closure(ledger, &closure)?;
    let receipt = run.receipt(tx).expect("seed executed");
    let truth = match &claim.query {
        Query::TransferSucceeded { tx: queried } => {
            run.state.outcome(queried).map(QueryValue::Bool)
        }
        q => {
            let (key, at) = q.key_at().expect("key-valued query");
            (at <= locator.position())
                .then(|| run.state.value_at(&key, at).ok())
                .flatten()
                .map(|v| q.answer_from_value(v))
        }
    };
    let verdict = match (&receipt.status, receipt.slashed) {
        (TxStatus::Applied, Some(p)) => OathVerdict::Slashed(p),
        (TxStatus::Applied, None) => OathVerdict::Honest,
        (TxStatus::RolledBack(RollbackReason::UnderfundedSlash), _) => {
            OathVerdict::UnderfundedSlash
        }
        (TxStatus::RolledBack(reason), _) => OathVerdict::Void(reason.clone()),
        (TxStatus::FeeReservedOnly, _) => unreachable!("executed receipts are never fee-only"),
    };
    Ok(OathAudit {
        tx: *tx,
        claimed: claim.claimed,
        truth,
        verdict,
        cost: CostReport::of(&run),
    })
}
