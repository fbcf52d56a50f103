//! Generators for transaction flooding, execution flooding and targeted
//! execution flooding, plus a fixture that measures each defense.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::accounting::{maq_answer, pay_verify, MaqError, MaqPath, PayDecision, PayError};
use crate::executor::{observe, ObserveError};
use crate::keys::{Keypair, Keyring};
use crate::ledger::{GenesisError, Ledger, SealError};
use crate::query::Query;
use crate::tx::{Transaction, TxBuilder};
use crate::types::{AccountId, Gas, StateKey, TokenAmount, TxId};
use crate::vm::code::{ContractCode, Opcode, Value};
use crate::vm::gas::GasTable;
use crate::vm::interp::burn_digest;
use crate::vm::ExecCounters;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    TxDos,
    ExecDos,
    TargetedExecDos,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub kind: AttackKind,
    pub count: usize,
    pub burn: u64,
    /// Target of targeted flooding; required exactly for that kind.
    pub victim: Option<AccountId>,
    pub q: TokenAmount,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AttackError {
    #[error("a victim is required for targeted flooding and only for it")]
    VictimMismatch,
    #[error("burn must be positive")]
    ZeroBurn,
    #[error("fixture genesis: {0}")]
    Genesis(#[from] GenesisError),
    #[error("fixture transaction rejected: {0}")]
    Seal(#[from] SealError),
    #[error("victim query failed: {0}")]
    Observe(#[from] ObserveError),
    #[error("victim payment check failed: {0}")]
    Pay(#[from] PayError),
    #[error("victim minimal query failed: {0}")]
    Maq(#[from] MaqError),
}

impl AttackConfig {
    pub fn validate(&self) -> Result<(), AttackError> {
        if self.burn == 0 && self.kind != AttackKind::TxDos {
            return Err(AttackError::ZeroBurn);
        }
        if self.victim.is_some() != (self.kind == AttackKind::TargetedExecDos) {
            return Err(AttackError::VictimMismatch);
        }
        Ok(())
    }
}

/// Signed transfers from fresh, unfunded keys. Every one is well formed and
/// correctly signed; none can pay its fee.
pub fn gen_tx_dos(
    count: usize,
    rng: &mut ChaCha20Rng,
    keyring: &Keyring,
    gas: &GasTable,
) -> Vec<Transaction> {
    (0..count)
        .map(|_| {
            let key = Keypair::generate(rng);
            keyring.register(&key);
            let to = Keypair::generate(rng).account();
            TxBuilder::transfer(key.account(), to, TokenAmount(1))
                .gas(gas.intrinsic_transfer, TokenAmount(1))
                .sign(&key)
        })
        .collect()
}

/// Mean per-transaction admission time over two windows of a transaction
/// flood: the `window` rejections ending at the `early_at`-th, and the last
/// `window`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AdmissionLatency {
    pub count: usize,
    pub rejected: usize,
    pub early_mean_ns: f64,
    pub late_mean_ns: f64,
    /// Transactions applied plus opcodes run during admission.
    pub vm_steps: u64,
}

impl AdmissionLatency {
    pub fn ratio(&self) -> f64 {
        let (lo, hi) = if self.early_mean_ns <= self.late_mean_ns {
            (self.early_mean_ns, self.late_mean_ns)
        } else {
            (self.late_mean_ns, self.early_mean_ns)
        };
        hi / lo.max(1.0)
    }
}

/// Pushes a flood of `count` unfundable transfers through one block builder,
/// timing each rejection. Repeats `trials` times and keeps the fastest mean
/// of each window, which filters scheduler noise without hiding growth.
pub fn measure_admission_latency(
    count: usize,
    early_at: usize,
    window: usize,
    trials: usize,
    seed: u64,
) -> Result<AdmissionLatency, AttackError> {
    assert!(window > 0 && window <= early_at && early_at <= count);
    let gas = GasTable::default();
    let mut best: Option<AdmissionLatency> = None;
    for trial in 0..trials.max(1) as u64 {
        let keyring = std::sync::Arc::new(Keyring::new());
        let treasury = Keypair::named("treasury", seed);
        keyring.register(&treasury);
        let ledger = Ledger::genesis(
            vec![(treasury.account(), TokenAmount(1_000_000))],
            keyring.clone(),
            gas.clone(),
        )?;
        let mut rng = ChaCha20Rng::seed_from_u64(seed.wrapping_add(trial));
        let flood = gen_tx_dos(count, &mut rng, &keyring, &gas);
        let before = ExecCounters::read();
        let mut builder = ledger.builder();
        let mut nanos = Vec::with_capacity(count);
        let mut rejected = 0;
        for tx in flood {
            let started = std::time::Instant::now();
            let outcome = builder.push(tx);
            nanos.push(started.elapsed().as_nanos() as f64);
            rejected += usize::from(outcome.is_err());
        }
        let steps = ExecCounters::since(before);
        let mean = |range: std::ops::Range<usize>| {
            let n = range.len() as f64;
            nanos[range].iter().sum::<f64>() / n
        };
        let run = AdmissionLatency {
            count,
            rejected,
            early_mean_ns: mean(early_at - window..early_at),
            late_mean_ns: mean(count - window..count),
            vm_steps: steps.txs_applied + steps.opcodes,
        };
        best = Some(match best {
            None => run,
            Some(b) => AdmissionLatency {
                rejected: b.rejected.min(run.rejected),
                early_mean_ns: b.early_mean_ns.min(run.early_mean_ns),
                late_mean_ns: b.late_mean_ns.min(run.late_mean_ns),
                vm_steps: b.vm_steps.max(run.vm_steps),
                ..b
            },
        });
    }
    Ok(best.expect("at least one trial"))
}

/// A deployed flooding contract and the calls that trigger it.
#[derive(Clone, Debug)]
pub struct AttackBatch {
    pub contract: AccountId,
    pub deploy: Transaction,
    pub calls: Vec<Transaction>,
}

/// Burns `burn` gas, derives a recipient from the result and pays it 1.
pub fn exec_dos_code(burn: u64) -> ContractCode {
    ContractCode::new(vec![
        Opcode::Burn(burn),
        Opcode::DeriveAccount,
        Opcode::Push(Value::Word(1)),
        Opcode::Transfer,
    ])
    .expect("valid code")
}

/// Burns `burn` gas, then pays `q` to `victim`.
pub fn targeted_code(burn: u64, victim: AccountId, q: TokenAmount) -> ContractCode {
    ContractCode::new(vec![
        Opcode::Burn(burn),
        Opcode::Push(Value::Account(victim)),
        Opcode::Push(Value::Word(q.0)),
        Opcode::Transfer,
    ])
    .expect("valid code")
}

/// Intrinsic cost plus every opcode of a straight-line program.
pub fn straight_line_gas(code: &ContractCode, gas: &GasTable) -> Gas {
    gas.intrinsic_call + code.ops.iter().map(|op| gas.op_cost(op)).sum::<Gas>()
}

/// The account an Exec-DoS call with `nonce` pays.
pub fn exec_dos_recipient(funder: &AccountId, burn: u64, nonce: u64) -> AccountId {
    AccountId::derived(burn_digest(burn), funder, nonce)
}

fn batch(
    funder: &Keypair,
    first_nonce: u64,
    code: ContractCode,
    endowment: TokenAmount,
    count: usize,
    gas: &GasTable,
    declare: impl Fn(u64) -> Vec<StateKey>,
) -> AttackBatch {
    let limit = straight_line_gas(&code, gas);
    let deploy = TxBuilder::create(funder.account(), code, endowment)
        .nonce(first_nonce)
        .gas(gas.intrinsic_create, TokenAmount(1))
        .sign(funder);
    let contract = deploy.recipient();
    let calls = (1..=count as u64)
        .map(|i| {
            let nonce = first_nonce + i;
            TxBuilder::call(funder.account(), contract, Vec::new())
                .nonce(nonce)
                .gas(limit, TokenAmount(1))
                .declare_all(declare(nonce))
                .sign(funder)
        })
        .collect();
    AttackBatch {
        contract,
        deploy,
        calls,
    }
}

pub fn gen_exec_dos(
    funder: &Keypair,
    first_nonce: u64,
    burn: u64,
    count: usize,
    gas: &GasTable,
) -> AttackBatch {
    let owner = funder.account();
    batch(
        funder,
        first_nonce,
        exec_dos_code(burn),
        TokenAmount(count as u64),
        count,
        gas,
        |nonce| vec![StateKey::Balance(exec_dos_recipient(&owner, burn, nonce))],
    )
}

pub fn gen_targeted(
    funder: &Keypair,
    first_nonce: u64,
    victim: AccountId,
    burn: u64,
    count: usize,
    q: TokenAmount,
    gas: &GasTable,
) -> AttackBatch {
    batch(
        funder,
        first_nonce,
        targeted_code(burn, victim, q),
        TokenAmount(q.0 * count as u64),
        count,
        gas,
        |_| vec![StateKey::Balance(victim)],
    )
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AttackMetrics {
    pub attack: AttackKind,
    pub count: usize,
    pub burn: u64,
    pub seed: u64,
    pub admission_rejects: usize,
    /// Transactions applied plus opcodes run while sealing and validating.
    pub vm_steps_during_consensus: u64,
    pub victim_maq_gas: Gas,
    pub victim_maq_path: MaqPath,
    pub victim_pay_gas: Gas,
    pub victim_pay_accepted: bool,
    pub victim_exact_balance_gas: Gas,
}

/// The chain built by [`run_attack`] and what was measured on it.
pub struct AttackRun {
    pub ledger: Ledger,
    pub victim: AccountId,
    pub payment: TxId,
    pub payroll_call: TxId,
    pub metrics: AttackMetrics,
}

pub const VICTIM_GENESIS: u64 = 10_000;
pub const PAYROLL: u64 = 5_000;
pub const PAYROLL_BURN: u64 = 2_000;
pub const VICTIM_PAYMENT: u64 = 12_000;
const CALLS_PER_BLOCK: usize = 1_000;

/// Builds a chain where `victim` earns a contract-sourced salary, the attack
/// runs, and the victim then pays more than its zero-cost funds cover. The
/// salary call is the income presented as proof of funds.
pub fn run_attack(
    kind: AttackKind,
    count: usize,
    burn: u64,
    q: TokenAmount,
    victim_name: &str,
    seed: u64,
) -> Result<AttackRun, AttackError> {
    let gas = GasTable::default();
    let keyring = std::sync::Arc::new(Keyring::new());
    let treasury = Keypair::named("treasury", seed);
    let employer = Keypair::named("employer", seed);
    let victim = Keypair::named(victim_name, seed);
    let payee = Keypair::named("payee", seed);
    for k in [&treasury, &employer, &victim, &payee] {
        keyring.register(k);
    }
    let config = AttackConfig {
        kind,
        count,
        burn,
        victim: (kind == AttackKind::TargetedExecDos).then(|| victim.account()),
        q,
    };
    config.validate()?;
    let mut ledger = Ledger::genesis(
        vec![
            (treasury.account(), TokenAmount(1_000_000_000_000)),
            (employer.account(), TokenAmount(1_000_000)),
            (victim.account(), TokenAmount(VICTIM_GENESIS)),
        ],
        keyring.clone(),
        gas.clone(),
    )?;
    let before = ExecCounters::read();

    let payroll_code = ContractCode::new(vec![
        Opcode::Burn(PAYROLL_BURN),
        Opcode::Push(Value::Account(victim.account())),
        Opcode::Push(Value::Word(PAYROLL)),
        Opcode::Transfer,
    ])
    .expect("valid code");
    let payroll_limit = straight_line_gas(&payroll_code, &gas);
    let create = TxBuilder::create(employer.account(), payroll_code, TokenAmount(PAYROLL))
        .nonce(0)
        .gas(gas.intrinsic_create, TokenAmount(1))
        .sign(&employer);
    let payroll = create.recipient();
    let salary = TxBuilder::call(employer.account(), payroll, Vec::new())
        .nonce(1)
        .gas(payroll_limit, TokenAmount(1))
        .declare(StateKey::Balance(victim.account()))
        .sign(&employer);
    let payroll_call = salary.id();
    ledger.seal_block(vec![create, salary])?;

    let mut admission_rejects = 0;
    match kind {
        AttackKind::TxDos => {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let flood = gen_tx_dos(count, &mut rng, &keyring, &gas);
            admission_rejects = ledger.seal_admissible(flood).len();
        }
        AttackKind::ExecDos | AttackKind::TargetedExecDos => {
            let generated = if kind == AttackKind::ExecDos {
                gen_exec_dos(&treasury, 0, burn, count, &gas)
            } else {
                gen_targeted(&treasury, 0, victim.account(), burn, count, q, &gas)
            };
            ledger.seal_block(vec![generated.deploy])?;
            let mut calls = generated.calls.into_iter().peekable();
            while calls.peek().is_some() {
                let chunk: Vec<_> = calls.by_ref().take(CALLS_PER_BLOCK).collect();
                admission_rejects += ledger.seal_admissible(chunk).len();
            }
        }
    }

    let pay = TxBuilder::transfer(
        victim.account(),
        payee.account(),
        TokenAmount(VICTIM_PAYMENT),
    )
    .nonce(0)
    .gas(gas.intrinsic_transfer, TokenAmount(1))
    .sign(&victim);
    let payment = pay.id();
    ledger.seal_block(vec![pay])?;
    let consensus = ExecCounters::since(before);

    let maq = maq_answer(
        &ledger,
        &Query::TransferSucceeded { tx: payment },
        &[payroll_call],
    )?;
    let verdict = pay_verify(&ledger, &payment, &[payroll_call])?;
    let exact = observe(
        &ledger,
        &Query::ExactBalance {
            account: victim.account(),
            at: ledger.end(),
        },
        None,
    )?;
    let metrics = AttackMetrics {
        attack: kind,
        count,
        burn,
        seed,
        admission_rejects,
        vm_steps_during_consensus: consensus.txs_applied + consensus.opcodes,
        victim_maq_gas: maq.cost.gas_executed,
        victim_maq_path: maq.path,
        victim_pay_gas: verdict.cost.gas_executed,
        victim_pay_accepted: verdict.decision == PayDecision::Accept,
        victim_exact_balance_gas: exact.gas_executed,
    };
    log::info!("attack metrics: {metrics:?}");
    Ok(AttackRun {
        ledger,
        victim: victim.account(),
        payment,
        payroll_call,
        metrics,
    })
}
