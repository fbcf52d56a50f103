//! Acceptance checks shared by the acceptance target and the focused tests.
//! Each check returns a verdict with enough detail to diagnose a failure.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use anh_core::accounting::knapsack::{self, Item};
use anh_core::accounting::{audit_oath, incomes_of, pay_verify, OathVerdict};
use anh_core::attacks::{measure_admission_latency, run_attack, AttackKind};
use anh_core::executor::{eager_execute, observe, EagerRun};
use anh_core::ledger::Ledger;
use anh_core::oracle::differential_check;
use anh_core::query::{Query, QueryValue};
use anh_core::random::{scenario_batch, MAX_ACCOUNTS, MAX_CONTRACTS};
use anh_core::scenario::{build_chain, run, Chain, RunOptions, Scenario};
use anh_core::tx::TxKind;
use anh_core::types::{AccountId, Position, StateKey, TokenAmount};
use anh_core::vm::{RollbackReason, TxStatus};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub struct Verdict {
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self {
            passed,
            detail: detail.into(),
        }
    }

    pub fn line(&self, name: &str) -> String {
        let status = if self.passed { "PASS" } else { "FAIL" };
        format!("{name} {status}: {}", self.detail)
    }
}

pub fn scenarios_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

pub fn bundled_names() -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(scenarios_dir())
        .expect("scenarios directory")
        .filter_map(|e| {
            let path = e.ok()?.path();
            (path.extension()? == "json").then(|| path.file_stem()?.to_str().map(str::to_owned))?
        })
        .collect();
    names.sort();
    names
}

pub fn load(name: &str) -> Scenario {
    let path = scenarios_dir().join(format!("{name}.json"));
    let text = std::fs::read_to_string(&path).expect("bundled scenario readable");
    Scenario::from_json(&text).expect("bundled scenario parses")
}

pub fn chain(name: &str) -> Chain {
    build_chain(&load(name), None, None).expect("bundled scenario builds")
}

fn balance_at(eager: &EagerRun<'_>, account: AccountId, at: Position) -> u64 {
    eager
        .state
        .value_at(&StateKey::Balance(account), at)
        .expect("full replay knows every key")
}

/// Statistics of a differential sweep over random scenarios.
#[derive(Debug, Default)]
pub struct Sweep {
    pub scenarios: usize,
    pub txs: usize,
    pub max_accounts: usize,
    pub max_contracts: usize,
    pub comparisons: usize,
    pub diffs: usize,
    pub receipt_diffs: usize,
    pub zero_cost_violations: usize,
    pub supply_failures: usize,
    pub first_failure: Option<String>,
    pub elapsed: Duration,
}

pub fn random_sweep(seed: u64, count: usize, max_txs: usize) -> Sweep {
    let started = Instant::now();
    let mut sweep = Sweep::default();
    for scenario in scenario_batch(seed, count, max_txs) {
        let names: BTreeSet<&String> = scenario
            .genesis
            .keys()
            .chain(scenario.accounts.iter())
            .collect();
        sweep.max_accounts = sweep.max_accounts.max(names.len());
        sweep.max_contracts = sweep.max_contracts.max(scenario.contracts.len());
        let chain = build_chain(&scenario, None, None).expect("generated scenarios build");
        sweep.scenarios += 1;
        sweep.txs += chain.ledger.tx_count();
        let report = differential_check(&chain.ledger).expect("replay succeeds");
        sweep.comparisons += report.comparisons;
        sweep.diffs += report.diffs.len();
        sweep.receipt_diffs += report.receipt_diffs.len();
        sweep.zero_cost_violations += report.zero_cost_violations.len();
        sweep.supply_failures += usize::from(!report.supply.conserved());
        if sweep.first_failure.is_none() && !report.is_clean() {
            sweep.first_failure = Some(format!(
                "seed {}: {:?}",
                scenario.seed,
                report.violations().first()
            ));
        }
    }
    sweep.elapsed = started.elapsed();
    sweep
}

pub fn ac1_lazy_eager(sweep: &Sweep, min_scenarios: usize, max_txs: usize) -> Verdict {
    let within_limits = sweep.max_accounts <= MAX_ACCOUNTS && sweep.max_contracts <= MAX_CONTRACTS;
    let clean = sweep.diffs == 0 && sweep.receipt_diffs == 0 && sweep.supply_failures == 0;
    let passed = sweep.scenarios >= min_scenarios
        && within_limits
        && clean
        && sweep.elapsed < Duration::from_secs(60);
    Verdict::new(
        passed,
        format!(
            "{} scenarios (<= {max_txs} txs, <= {} accounts, <= {} contracts), {} txs, {} comparisons, {} diffs, {} receipt diffs, {} supply failures, {:.1?}{}",
            sweep.scenarios,
            sweep.max_accounts,
            sweep.max_contracts,
            sweep.txs,
            sweep.comparisons,
            sweep.diffs,
            sweep.receipt_diffs,
            sweep.supply_failures,
            sweep.elapsed,
            sweep.first_failure.as_deref().map(|f| format!("; first: {f}")).unwrap_or_default(),
        ),
    )
}

pub fn ac5_zero_cost(sweep: &Sweep) -> Verdict {
    Verdict::new(
        sweep.zero_cost_violations == 0 && sweep.scenarios > 0,
        format!(
            "{} zero-cost balances above the oracle across {} scenarios",
            sweep.zero_cost_violations, sweep.scenarios
        ),
    )
}

pub fn ac2_double_spend() -> Verdict {
    let chain = chain("double_spend");
    let eager = eager_execute(&chain.ledger, chain.ledger.end()).expect("replay");
    let mut problems = Vec::new();
    let (a, b) = ("to_bob", "to_carol");
    let (pos_a, pos_b) = match (chain.labels.position(a), chain.labels.position(b)) {
        (Ok(x), Ok(y)) => (x, y),
        _ => return Verdict::new(false, "a transfer was not sealed"),
    };
    let (earlier, later) = if pos_a < pos_b { (a, b) } else { (b, a) };
    let status = |label: &str| {
        let id = chain.labels.tx(label).expect("label");
        eager.receipt(&id).expect("receipt").status.clone()
    };
    if status(earlier) != TxStatus::Applied {
        problems.push(format!("{earlier} not applied"));
    }
    if status(later) != TxStatus::RolledBack(RollbackReason::InsufficientBalance) {
        problems.push(format!("{later} was {:?}", status(later)));
    }
    // Alice 1020 pays two fees of 10 and one transfer of 1000.
    let expected = [("Alice", 0u64), ("Bob", 1000), ("Carol", 0)];
    for (name, want) in expected {
        let account = chain.names.account(name).expect("name");
        let end = chain.ledger.end();
        let truth = balance_at(&eager, account, end);
        let lazy = observe(
            &chain.ledger,
            &Query::ExactBalance { account, at: end },
            None,
        )
        .map(|o| o.result);
        if truth != want || lazy != Ok(QueryValue::Amount(TokenAmount(want))) {
            problems.push(format!(
                "{name}: oracle {truth}, lazy {lazy:?}, expected {want}"
            ));
        }
    }
    Verdict::new(
        problems.is_empty(),
        if problems.is_empty() {
            format!("both sealed, {earlier} applied, {later} rolled back, balances 0/1000/0")
        } else {
            problems.join("; ")
        },
    )
}

/// Income cost of Alice's income `income` before the payment `pay`.
fn alice_income_cost(chain: &Chain, income: &str) -> Option<u64> {
    let alice = chain.names.account("Alice").ok()?;
    let at = chain.labels.position("pay").ok()?;
    let id = chain.labels.tx(income).ok()?;
    incomes_of(&chain.ledger, &alice, at)
        .ok()?
        .into_iter()
        .find(|r| r.tx.tx_id == id)
        .map(|r| r.income_cost)
}

pub fn ac3_figure_one() -> Verdict {
    let cases = [
        ("fig1a", "tx_ca", None),
        ("fig1b", "tx_ya", Some("tx_ya")),
        ("fig1c", "tx_da", Some("tx_yd")),
    ];
    let mut passed = true;
    let mut parts = Vec::new();
    for (name, income, source) in cases {
        let chain = chain(name);
        let eager = eager_execute(&chain.ledger, chain.ledger.end()).expect("replay");
        let expected = match source {
            None => 0,
            Some(label) => {
                let id = chain.labels.tx(label).expect("label");
                eager.receipt(&id).expect("receipt").gas_used
            }
        };
        let got = alice_income_cost(&chain, income);
        passed &= got == Some(expected) && (source.is_none() || expected > 0);
        parts.push(format!("{name} {got:?} vs {expected}"));
    }
    Verdict::new(passed, parts.join(", "))
}

/// Lemma 1 over every user account and every transaction position plus the
/// chain end. Subsets are enumerated exhaustively up to `exhaustive` incomes;
/// larger catalogs check the empty set, singletons and the full set.
pub fn ac4_lemma1(seed: u64, count: usize, max_txs: usize, exhaustive: usize) -> Verdict {
    let mut checks = 0u64;
    let mut exhaustive_sets = 0u64;
    let mut violations = Vec::new();
    for scenario in scenario_batch(seed, count, max_txs) {
        let chain = build_chain(&scenario, None, None).expect("generated scenarios build");
        let ledger = &chain.ledger;
        let end = ledger.end();
        let eager = eager_execute(ledger, end).expect("replay");
        let mut positions: Vec<Position> =
            ledger.located_txs().map(|(l, _)| l.position()).collect();
        positions.push(end);
        for account in chain
            .names
            .directory()
            .into_values()
            .filter(AccountId::is_user)
        {
            let all = incomes_of(ledger, &account, end).expect("incomes");
            let x0 = i128::from(ledger.genesis_balance(&account).0);
            for &at in &positions {
                let amounts: Vec<i128> = all
                    .iter()
                    .filter(|r| r.tx.position() < at)
                    .map(|r| i128::from(r.amount.0))
                    .collect();
                let q = ledger.index().total_expenses(&account, at) as i128;
                let truth = i128::from(balance_at(&eager, account, at));
                let total: i128 = amounts.iter().sum();
                let mut sums: Vec<i128> = Vec::new();
                if amounts.len() <= exhaustive {
                    for mask in 0u32..1 << amounts.len() {
                        sums.push(
                            (0..amounts.len())
                                .filter(|i| mask & (1 << i) != 0)
                                .map(|i| amounts[i])
                                .sum(),
                        );
                    }
                    exhaustive_sets += sums.len() as u64;
                } else {
                    sums.push(0);
                    sums.extend(amounts.iter().copied());
                }
                for p_theta in sums {
                    checks += 1;
                    if x0 + p_theta - q > truth {
                        violations.push(format!("seed {} {account} at {at}", scenario.seed));
                    }
                }
                checks += 1;
                if x0 + total - q != truth {
                    violations.push(format!(
                        "seed {} {account} at {at}: full bound {} vs {truth}",
                        scenario.seed,
                        x0 + total - q
                    ));
                }
            }
        }
    }
    Verdict::new(
        violations.is_empty() && checks > 0,
        format!(
            "{checks} bound checks ({exhaustive_sets} from exhaustive subsets), {} violations{}",
            violations.len(),
            violations
                .first()
                .map(|v| format!("; first: {v}"))
                .unwrap_or_default()
        ),
    )
}

/// Payments accepted from automatically chosen and from complete income sets
/// must have been applied by the oracle.
pub fn pay_soundness(seed: u64, count: usize, max_txs: usize) -> Verdict {
    let (mut accepted, mut checked, mut unsound) = (0, 0, Vec::new());
    for scenario in scenario_batch(seed, count, max_txs) {
        let chain = build_chain(&scenario, None, None).expect("generated scenarios build");
        let ledger = &chain.ledger;
        let eager = eager_execute(ledger, ledger.end()).expect("replay");
        for (locator, tx) in ledger.located_txs() {
            if tx.kind() != TxKind::Transfer {
                continue;
            }
            let everything: Vec<_> = incomes_of(ledger, &tx.sender(), locator.position())
                .expect("incomes")
                .into_iter()
                .map(|r| r.tx.tx_id)
                .collect();
            let auto = chain.auto_theta(&locator.tx_id).unwrap_or_default();
            for theta in [auto, everything] {
                checked += 1;
                let verdict = pay_verify(ledger, &locator.tx_id, &theta).expect("verify");
                if verdict.decision == anh_core::accounting::PayDecision::Accept {
                    accepted += 1;
                    let status = &eager.receipt(&locator.tx_id).expect("receipt").status;
                    if !status.is_applied() {
                        unsound.push(format!("seed {} {}", scenario.seed, locator.tx_id));
                    }
                }
            }
        }
    }
    Verdict::new(
        unsound.is_empty() && accepted > 0,
        format!(
            "{checked} verifications, {accepted} accepted, {} accepted but not applied",
            unsound.len()
        ),
    )
}

pub fn ac6_tx_dos(count: usize) -> Verdict {
    let latency = measure_admission_latency(count, 100, 50, 5, 11).expect("measurement");
    let fixture = run_attack(AttackKind::TxDos, count, 0, TokenAmount(1), "victim", 11)
        .expect("fixture runs");
    let m = &fixture.metrics;
    let ratio = latency.ratio();
    let passed = latency.rejected == count
        && latency.vm_steps == 0
        && m.admission_rejects == count
        && m.vm_steps_during_consensus == 0
        && ratio < 2.0;
    Verdict::new(
        passed,
        format!(
            "{}/{count} rejected at admission ({} in the fixture), vm steps {}/{}, mean latency {:.0} ns at the 100th vs {:.0} ns at the last (ratio {ratio:.2})",
            latency.rejected,
            m.admission_rejects,
            latency.vm_steps,
            m.vm_steps_during_consensus,
            latency.early_mean_ns,
            latency.late_mean_ns,
        ),
    )
}

pub fn ac7_targeted(small: usize, large: usize, burn: u64) -> Verdict {
    let run = |count| {
        run_attack(
            AttackKind::TargetedExecDos,
            count,
            burn,
            TokenAmount(1),
            "victim",
            5,
        )
        .expect("fixture runs")
        .metrics
    };
    let (a, b) = (run(small), run(large));
    let growth = b
        .victim_exact_balance_gas
        .saturating_sub(a.victim_exact_balance_gas);
    let needed = (large - small) as u64 * burn;
    let passed = a.victim_maq_gas == b.victim_maq_gas
        && a.victim_pay_gas == b.victim_pay_gas
        && a.victim_pay_accepted
        && b.victim_pay_accepted
        && growth >= needed;
    Verdict::new(
        passed,
        format!(
            "maq gas {} vs {}, pay gas {} vs {}, exact-balance gas {} vs {} (growth {growth} >= {needed})",
            a.victim_maq_gas,
            b.victim_maq_gas,
            a.victim_pay_gas,
            b.victim_pay_gas,
            a.victim_exact_balance_gas,
            b.victim_exact_balance_gas,
        ),
    )
}

/// Greedy results above `(1 + epsilon)` times the optimum over the seeded
/// catalogs of the knapsack check (seed 8, 1000 catalogs, 922 feasible).
/// Measured once and pinned; the solver falls back to the exact search.
pub const GREEDY_DOCUMENTED_MISSES: usize = 102;

pub struct KnapsackStats {
    pub catalogs: usize,
    pub dp_mismatches: usize,
    pub solve_over_bound: usize,
    pub greedy_misses: usize,
    pub infeasible: usize,
}

pub fn knapsack_stats(seed: u64, catalogs: usize, max_items: usize) -> KnapsackStats {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut stats = KnapsackStats {
        catalogs,
        dp_mismatches: 0,
        solve_over_bound: 0,
        greedy_misses: 0,
        infeasible: 0,
    };
    let bound =
        |opt: u128, cost: u128| cost as f64 > opt as f64 * (1.0 + knapsack::DEFAULT_EPSILON);
    for _ in 0..catalogs {
        let n = rng.gen_range(1..=max_items);
        let items: Vec<Item> = (0..n)
            .map(|_| Item {
                amount: rng.gen_range(1..=1_000),
                cost: if rng.gen_bool(0.2) {
                    0
                } else {
                    rng.gen_range(1..=5_000)
                },
            })
            .collect();
        let total: u128 = items.iter().map(|i| i.amount).sum();
        let target = rng.gen_range(1..=total + total / 10);
        let Some(opt) = knapsack::brute_force(&items, target) else {
            stats.infeasible += 1;
            if knapsack::solve(&items, target, knapsack::DEFAULT_EPSILON).is_ok() {
                stats.dp_mismatches += 1;
            }
            continue;
        };
        if knapsack::exact(&items, target).cost != opt {
            stats.dp_mismatches += 1;
        }
        match knapsack::solve(&items, target, knapsack::DEFAULT_EPSILON) {
            Ok(s) if s.amount >= target && !bound(opt, s.cost) => {}
            _ => stats.solve_over_bound += 1,
        }
        if knapsack::greedy(&items, target).is_none_or(|g| bound(opt, g.cost)) {
            stats.greedy_misses += 1;
        }
    }
    stats
}

pub fn ac8_knapsack() -> Verdict {
    let s = knapsack_stats(8, 1000, 15);
    Verdict::new(
        s.dp_mismatches == 0 && s.solve_over_bound == 0 && s.greedy_misses <= GREEDY_DOCUMENTED_MISSES,
        format!(
            "{} catalogs ({} infeasible), DP mismatches {}, solver above 1.01x {}, greedy above 1.01x {} (documented {})",
            s.catalogs,
            s.infeasible,
            s.dp_mismatches,
            s.solve_over_bound,
            s.greedy_misses,
            GREEDY_DOCUMENTED_MISSES
        ),
    )
}

#[derive(Debug, Default)]
pub struct OathTally {
    pub honest: usize,
    pub slashed: usize,
    pub underfunded: usize,
    pub void: usize,
    pub violations: Vec<String>,
}

/// Audits every oath of `ledger` against full replay.
pub fn tally_oaths(ledger: &Ledger, tally: &mut OathTally) {
    let eager = eager_execute(ledger, ledger.end()).expect("replay");
    for (locator, tx) in ledger.located_txs() {
        let Some(claim) = tx.oath_claim() else {
            continue;
        };
        let audit = audit_oath(ledger, &locator.tx_id).expect("audit");
        let receipt = eager.receipt(&locator.tx_id).expect("receipt");
        let contract = tx.recipient();
        let moved: Vec<_> = receipt
            .state_delta
            .iter()
            .filter(|c| c.key != StateKey::Balance(tx.sender()))
            .filter(|c| matches!(c.key, StateKey::Balance(_)))
            .collect();
        let mut fail = |why: String| tally.violations.push(format!("{}: {why}", locator.tx_id));
        let lies = audit.truth.is_some_and(|t| t != claim.claimed);
        match &audit.verdict {
            OathVerdict::Honest => {
                tally.honest += 1;
                if !moved.is_empty() || lies {
                    fail(format!("honest oath moved {moved:?}"));
                }
            }
            OathVerdict::Slashed(p) => {
                tally.slashed += 1;
                let burned = receipt.net_change(&StateKey::Balance(AccountId::BLACKHOLE));
                let paid = receipt.net_change(&StateKey::Balance(contract));
                if *p != claim.penalty
                    || burned != i128::from(p.0)
                    || paid != -i128::from(p.0)
                    || moved.len() != 2
                    || !lies
                {
                    fail(format!("slash of {p} moved {moved:?}"));
                }
            }
            OathVerdict::UnderfundedSlash => {
                tally.underfunded += 1;
                let deposit = balance_at(&eager, contract, locator.position());
                if !moved.is_empty() || deposit >= claim.penalty.0 || !lies {
                    fail(format!(
                        "underfunded slash with deposit {deposit} moved {moved:?}"
                    ));
                }
            }
            OathVerdict::Void(_) => {
                tally.void += 1;
                if !moved.is_empty() {
                    fail(format!("void oath moved {moved:?}"));
                }
            }
        }
    }
}

pub fn ac9_oath(seed: u64, count: usize, max_txs: usize) -> Verdict {
    let mut tally = OathTally::default();
    tally_oaths(&chain("oath").ledger, &mut tally);
    let bundled = (tally.honest, tally.slashed, tally.underfunded);
    for scenario in scenario_batch(seed, count, max_txs) {
        let chain = build_chain(&scenario, None, None).expect("generated scenarios build");
        tally_oaths(&chain.ledger, &mut tally);
    }
    Verdict::new(
        tally.violations.is_empty() && bundled == (1, 1, 1) && tally.slashed > 1,
        format!(
            "{} honest, {} slashed, {} underfunded, {} void; {} violations{}",
            tally.honest,
            tally.slashed,
            tally.underfunded,
            tally.void,
            tally.violations.len(),
            tally
                .violations
                .first()
                .map(|v| format!("; first: {v}"))
                .unwrap_or_default()
        ),
    )
}

pub fn ac10_determinism(runs: usize) -> Verdict {
    let mut differing = Vec::new();
    let names = bundled_names();
    let options = RunOptions {
        oracle: true,
        ..RunOptions::default()
    };
    for name in &names {
        let scenario = load(name);
        let reports: Vec<String> = (0..runs)
            .map(|_| {
                run(&scenario, &options)
                    .expect("bundled scenario runs")
                    .to_json()
            })
            .collect();
        if reports.windows(2).any(|w| w[0] != w[1]) {
            differing.push(name.clone());
        }
    }
    Verdict::new(
        differing.is_empty() && !names.is_empty(),
        format!(
            "{} bundled scenarios x {runs} runs, differing: {differing:?}",
            names.len()
        ),
    )
}
