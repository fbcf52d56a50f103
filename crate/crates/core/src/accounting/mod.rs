//! Computational accounting: incomes and their costs, balance lower bounds,
//! income selection, payment verification and accountant oaths.

pub mod knapsack;
mod oath;

use std::collections::BTreeSet;

use serde::Serialize;
use thiserror::Error;

pub use oath::{
    audit_oath, oath_claim, oath_contract, read_claim, AuditError, OathAudit, OathVerdict,
};

use crate::executor::{
    dependency_closure, execute_closure, observe, ClosureRun, ObserveError, Prune, Seed,
};
use crate::ledger::Ledger;
use crate::query::{Query, QueryValue};
use crate::tx::TxKind;
use crate::types::{AccountId, Gas, Position, StateKey, TokenAmount, TxId, TxLocator};
use crate::vm::{ExecError, ExecutionReceipt};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum IncomeCase {
    /// Someone else's transaction raised the balance.
    DirectFromOther,
    /// The account's own transaction left more than its outlay predicts.
    SelfResidual,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct IncomeRecord {
    pub tx: TxLocator,
    pub beneficiary: AccountId,
    pub amount: TokenAmount,
    pub case: IncomeCase,
    pub income_cost: Gas,
    pub zero_cost: bool,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AccountingError {
    #[error("internal invariant violated: transaction {tx} yields negative income {amount} for {account:?}")]
    NegativeIncome {
        tx: TxId,
        account: AccountId,
        amount: i128,
    },
    #[error(transparent)]
    Exec(#[from] ExecError),
}

/// Income that `receipt` represents for `account`, if any.
///
/// For the account's own transactions the whole outlay (value plus fee
/// reservation) counts as expense, so what comes back, such as a refund or
/// the value of a rolled-back transfer, is income.
pub fn classify_income(
    receipt: &ExecutionReceipt,
    account: &AccountId,
) -> Result<Option<(IncomeCase, TokenAmount)>, AccountingError> {
    let net = receipt.net_change(&StateKey::Balance(*account));
    let (case, amount) = if receipt.sender == *account {
        (IncomeCase::SelfResidual, net + i128::from(receipt.outlay.0))
    } else {
        (IncomeCase::DirectFromOther, net)
    };
    if amount < 0 {
        return Err(AccountingError::NegativeIncome {
            tx: receipt.tx_id,
            account: *account,
            amount,
        });
    }
    let amount = u64::try_from(amount).expect("income bounded by supply");
    Ok((amount > 0).then_some((case, TokenAmount(amount))))
}

/// Cost report of an accounting computation. `gas_executed` counts only
/// contract execution; `gas_charged` adds the intrinsic cost of every
/// replayed transaction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CostReport {
    pub txs_executed: usize,
    pub gas_executed: Gas,
    pub gas_charged: Gas,
}

impl CostReport {
    fn of(run: &ClosureRun<'_>) -> Self {
        Self {
            txs_executed: run.txs_executed(),
            gas_executed: run.gas_executed(),
            gas_charged: run.gas_charged(),
        }
    }
}

/// Executes the closures needed to know the exact effect of `incomes`,
/// trusting the zero-cost ledger for transfers it proves.
pub fn execute_incomes<'l>(
    ledger: &'l Ledger,
    incomes: &[TxLocator],
) -> Result<ClosureRun<'l>, ExecError> {
    let seeds: Vec<Seed> = incomes.iter().map(|l| Seed::Tx(*l)).collect();
    let closure = dependency_closure(ledger, &seeds, Prune::ZeroCostProven);
    execute_closure(ledger, &closure)
}

/// Gas needed to confirm the effect of the transaction at `locator`: the
/// compute gas of its closure, where zero-cost-proven transfers are trusted
/// without execution of their provenance.
pub fn income_cost(ledger: &Ledger, locator: &TxLocator) -> Result<Gas, ExecError> {
    let run = execute_incomes(ledger, std::slice::from_ref(locator))?;
    Ok(CostReport::of(&run).gas_executed)
}

/// Every income of `account` strictly before `upto`, each with its cost.
pub fn incomes_of(
    ledger: &Ledger,
    account: &AccountId,
    upto: Position,
) -> Result<Vec<IncomeRecord>, AccountingError> {
    let mut records = Vec::new();
    for locator in ledger
        .index()
        .txs_touching(&StateKey::Balance(*account), upto)
    {
        let run = execute_incomes(ledger, std::slice::from_ref(locator))?;
        let receipt = run.receipt(&locator.tx_id).expect("seed executed");
        if let Some((case, amount)) = classify_income(receipt, account)? {
            let income_cost = CostReport::of(&run).gas_executed;
            records.push(IncomeRecord {
                tx: *locator,
                beneficiary: *account,
                amount,
                case,
                income_cost,
                zero_cost: income_cost == 0,
            });
        }
    }
    Ok(records)
}

/// Components of the lower bound `x0 + P_theta - Q` on a balance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct BalanceBound {
    pub x0: TokenAmount,
    pub p_theta: u128,
    pub q_expenses: u128,
}

impl BalanceBound {
    pub fn bound(&self) -> i128 {
        i128::from(self.x0.0) + self.p_theta as i128 - self.q_expenses as i128
    }
}

/// Lower bound on the balance of `account` just before `at`, from the exact
/// amounts of the incomes in `theta` (all of which must lie before `at`).
pub fn balance_bound(
    ledger: &Ledger,
    account: &AccountId,
    theta: &[TxLocator],
    at: Position,
) -> Result<(BalanceBound, CostReport), AccountingError> {
    debug_assert!(theta.iter().all(|l| l.position() < at));
    let run = execute_incomes(ledger, theta)?;
    let mut p_theta = 0u128;
    for locator in theta {
        let receipt = run.receipt(&locator.tx_id).expect("seed executed");
        if let Some((_, amount)) = classify_income(receipt, account)? {
            p_theta += u128::from(amount.0);
        }
    }
    let bound = BalanceBound {
        x0: ledger.genesis_balance(account),
        p_theta,
        q_expenses: ledger.index().total_expenses(account, at),
    };
    Ok((bound, CostReport::of(&run)))
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ThetaError {
    #[error("even every catalogued income leaves the bound short: {0}")]
    Infeasible(#[from] knapsack::Infeasible),
}

/// Cheapest set of catalogued incomes proving a balance of `required`
/// given genesis funds `x0` and expenses `q_expenses`.
pub fn select_theta(
    required: TokenAmount,
    catalog: &[IncomeRecord],
    q_expenses: u128,
    x0: TokenAmount,
) -> Result<Vec<IncomeRecord>, ThetaError> {
    let gap = i128::from(required.0) + q_expenses as i128 - i128::from(x0.0);
    if gap <= 0 {
        return Ok(Vec::new());
    }
    let mut ordered: Vec<&IncomeRecord> = catalog.iter().collect();
    ordered.sort_by_key(|r| r.tx);
    let items: Vec<knapsack::Item> = ordered
        .iter()
        .map(|r| knapsack::Item {
            amount: u128::from(r.amount.0),
            cost: u128::from(r.income_cost),
        })
        .collect();
    let chosen = knapsack::solve(&items, gap as u128, knapsack::DEFAULT_EPSILON)?;
    Ok(chosen.chosen.iter().map(|&i| ordered[i].clone()).collect())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum RejectReason {
    InsufficientProof,
    NotATransfer,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum PayDecision {
    Accept,
    Reject(RejectReason),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PayVerdict {
    pub decision: PayDecision,
    pub bound: BalanceBound,
    pub cost: CostReport,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PayError {
    #[error("payment {0} is not on chain")]
    UnknownPayment(TxId),
    #[error("income {0} is not on chain")]
    UnknownIncomeTx(TxId),
    #[error("income {0} does not precede the payment")]
    IncomeAfterPayment(TxId),
    #[error(transparent)]
    Accounting(#[from] AccountingError),
}

/// Recipient-side verification of an on-chain transfer: accept iff genesis
/// funds plus the exactly executed incomes `theta`, minus everything the
/// sender spent before and the payment's own fee, cover the value.
pub fn pay_verify(ledger: &Ledger, payment: &TxId, theta: &[TxId]) -> Result<PayVerdict, PayError> {
    let locator = ledger
        .locate(payment)
        .ok_or(PayError::UnknownPayment(*payment))?;
    let tx = ledger.tx(&locator);
    let theta = locate_theta(ledger, theta, locator.position())?;
    let (mut bound, cost) = balance_bound(ledger, &tx.sender(), &theta, locator.position())?;
    bound.q_expenses += u128::from(tx.fee_reservation().0);
    let decision = if tx.kind() != TxKind::Transfer {
        PayDecision::Reject(RejectReason::NotATransfer)
    } else if bound.bound() >= i128::from(tx.value().0) {
        PayDecision::Accept
    } else {
        PayDecision::Reject(RejectReason::InsufficientProof)
    };
    Ok(PayVerdict {
        decision,
        bound,
        cost,
    })
}

fn locate_theta(
    ledger: &Ledger,
    theta: &[TxId],
    before: Position,
) -> Result<Vec<TxLocator>, PayError> {
    let mut located = BTreeSet::new();
    for id in theta {
        let l = ledger.locate(id).ok_or(PayError::UnknownIncomeTx(*id))?;
        if l.position() >= before {
            return Err(PayError::IncomeAfterPayment(*id));
        }
        located.insert(l);
    }
    Ok(located.into_iter().collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum MaqPath {
    ZeroCost,
    Bound,
    Exact,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MaqAnswer {
    pub answer: bool,
    pub path: MaqPath,
    pub cost: CostReport,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MaqError {
    #[error("not a minimal accounting query")]
    NotMinimal,
    #[error(transparent)]
    Pay(#[from] PayError),
    #[error(transparent)]
    Observe(#[from] ObserveError),
}

/// Answers a minimal accounting query by the cheapest conclusive route: the
/// zero-cost ledger, then the bound from `theta`, then exact execution.
pub fn maq_answer(ledger: &Ledger, query: &Query, theta: &[TxId]) -> Result<MaqAnswer, MaqError> {
    match query {
        Query::BalanceAtLeast {
            account,
            amount,
            at,
        } => {
            if ledger.zero_cost().balance_before(account, *at) >= *amount {
                return Ok(free(true));
            }
            let located = locate_theta(ledger, theta, *at)?;
            let (bound, cost) =
                balance_bound(ledger, account, &located, *at).map_err(PayError::from)?;
            if bound.bound() >= i128::from(amount.0) {
                return Ok(MaqAnswer {
                    answer: true,
                    path: MaqPath::Bound,
                    cost,
                });
            }
        }
        Query::TransferSucceeded { tx } => {
            if ledger.zero_cost().is_proven(tx) {
                return Ok(free(true));
            }
            let verdict = pay_verify(ledger, tx, theta)?;
            if verdict.decision == PayDecision::Accept {
                return Ok(MaqAnswer {
                    answer: true,
                    path: MaqPath::Bound,
                    cost: verdict.cost,
                });
            }
        }
        _ => return Err(MaqError::NotMinimal),
    }
    exact_answer(ledger, query)
}

fn free(answer: bool) -> MaqAnswer {
    MaqAnswer {
        answer,
        path: MaqPath::ZeroCost,
        cost: CostReport::default(),
    }
}

fn exact_answer(ledger: &Ledger, query: &Query) -> Result<MaqAnswer, MaqError> {
    let observed = observe(ledger, query, None)?;
    Ok(MaqAnswer {
        answer: observed.result == QueryValue::Bool(true),
        path: MaqPath::Exact,
        cost: CostReport {
            txs_executed: observed.txs_executed,
            gas_executed: observed.gas_executed,
            gas_charged: observed.gas_charged,
        },
    })
}
