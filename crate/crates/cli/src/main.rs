//! `anh`: runs scenarios against the simulator and answers single questions
//! about a scenario chain. Results go to stdout as JSON, logs to stderr.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anh_core::accounting::{audit_oath, pay_verify};
use anh_core::attacks::{run_attack, AttackKind};
use anh_core::executor::observe;
use anh_core::query::{Query, QueryValue};
use anh_core::scenario::{
    build_chain, run, Chain, QuerySpec, RunOptions, Scenario, ThetaKeyword, ThetaSpec,
};
use anh_core::types::{Gas, Position, StateKey, TokenAmount};
use anh_core::vm::gas::GasTable;
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "anh", version, about = "Lazy-execution blockchain simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Gas table JSON replacing the scenario's.
    #[arg(long)]
    gas_table: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Seal the scenario schedule and answer everything it asks.
    Run {
        #[command(flatten)]
        input: ScenarioArgs,
        /// Also replay eagerly and embed a key-by-key diff.
        #[arg(long)]
        oracle: bool,
        /// Write the report here instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Persist the sealed blocks to this directory.
        #[arg(long)]
        ledger_dir: Option<PathBuf>,
    },
    /// Answer one query by executing its provenance closure.
    Observe {
        #[command(flatten)]
        input: ScenarioArgs,
        /// Scenario-style (`{"exact_balance":{"account":"Alice"}}`) or
        /// raw (`{"ExactBalance":{"account":"<hex>","at":{..}}}`) query.
        #[arg(long)]
        query: String,
        /// Refuse closures whose gas limits sum above this.
        #[arg(long)]
        budget: Option<Gas>,
    },
    /// Verify a payment from a set of the sender's incomes.
    Pay {
        #[command(flatten)]
        input: ScenarioArgs,
        /// Label of the payment transaction.
        #[arg(long)]
        payment: String,
        /// JSON file holding a list of income labels, or "auto".
        #[arg(long)]
        theta: Option<PathBuf>,
    },
    /// Audit an oath transaction.
    AuditOath {
        #[command(flatten)]
        input: ScenarioArgs,
        /// Label of the oath transaction.
        #[arg(long)]
        oath: String,
    },
    /// Show the index postings of an account in chain order.
    DumpIndex {
        #[command(flatten)]
        input: ScenarioArgs,
        #[arg(long)]
        account: String,
    },
    /// Run an attack on the measurement fixture and print its metrics.
    Attack {
        #[arg(long, value_enum)]
        kind: KindArg,
        #[arg(long)]
        count: usize,
        /// Gas each execution-flooding call burns.
        #[arg(long, default_value_t = 1000)]
        burn: u64,
        /// Name of the fixture's victim account.
        #[arg(long, default_value = "victim")]
        victim: String,
        /// Payout per targeted call.
        #[arg(long, default_value_t = 1)]
        q: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

// Variant names spell the command-line values.
#[allow(clippy::enum_variant_names)]
#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    TxDos,
    ExecDos,
    TargetedExecDos,
}

impl From<KindArg> for AttackKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::TxDos => AttackKind::TxDos,
            KindArg::ExecDos => AttackKind::ExecDos,
            KindArg::TargetedExecDos => AttackKind::TargetedExecDos,
        }
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

impl ScenarioArgs {
    fn load(&self) -> Result<(Scenario, Option<GasTable>)> {
        let scenario = Scenario::from_json(&read(&self.scenario)?)
            .with_context(|| format!("loading {}", self.scenario.display()))?;
        let gas = match &self.gas_table {
            Some(path) => Some(
                serde_json::from_str(&read(path)?)
                    .with_context(|| format!("parsing gas table {}", path.display()))?,
            ),
            None => None,
        };
        Ok((scenario, gas))
    }

    fn chain(&self) -> Result<Chain> {
        let (scenario, gas) = self.load()?;
        Ok(build_chain(&scenario, gas, self.seed)?)
    }
}

fn plain(value: QueryValue) -> Value {
    match value {
        QueryValue::Amount(a) => json!(a.0),
        QueryValue::Bool(b) => json!(b),
        QueryValue::Word(w) => json!(w),
    }
}

fn parse_query(text: &str, chain: &Chain) -> Result<Query> {
    if let Ok(spec) = serde_json::from_str::<QuerySpec>(text) {
        return Ok(chain.resolve_query(&spec)?);
    }
    serde_json::from_str::<Query>(text).context("query is neither scenario-style nor raw")
}

fn print(value: &Value) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("json serializes")
    );
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("ANH_LOG")).init();
    match execute(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn execute(command: Command) -> Result<ExitCode> {
    match command {
        Command::Run {
            input,
            oracle,
            report,
            ledger_dir,
        } => {
            let (scenario, gas) = input.load()?;
            let options = RunOptions {
                oracle,
                gas_table: gas.clone(),
                seed: input.seed,
            };
            let result = run(&scenario, &options)?;
            if let Some(dir) = ledger_dir {
                let chain = build_chain(&scenario, gas, input.seed)?;
                chain
                    .ledger
                    .save(&dir)
                    .with_context(|| format!("saving blocks to {}", dir.display()))?;
            }
            let text = result.to_json();
            match report {
                Some(path) => std::fs::write(&path, text + "\n")
                    .with_context(|| format!("writing {}", path.display()))?,
                None => println!("{text}"),
            }
            for v in &result.invariant_violations {
                log::error!("invariant violated: {v}");
            }
            Ok(if result.is_clean() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
        Command::Observe {
            input,
            query,
            budget,
        } => {
            let chain = input.chain()?;
            let query = parse_query(&query, &chain)?;
            let obs = observe(&chain.ledger, &query, budget)?;
            print(&json!({
                "result": plain(obs.result),
                "gas_executed": obs.gas_executed,
                "gas_charged": obs.gas_charged,
                "txs_executed": obs.txs_executed,
                "zero_cost": obs.zero_cost,
            }));
            Ok(ExitCode::SUCCESS)
        }
        Command::Pay {
            input,
            payment,
            theta,
        } => {
            let chain = input.chain()?;
            let payment_id = chain.labels.tx(&payment)?;
            let spec: ThetaSpec = match theta {
                Some(path) => serde_json::from_str(&read(&path)?)
                    .with_context(|| format!("parsing theta {}", path.display()))?,
                None => ThetaSpec::Keyword(ThetaKeyword::Auto),
            };
            let theta = match &spec {
                ThetaSpec::Labels(labels) => labels
                    .iter()
                    .map(|l| chain.labels.tx(l))
                    .collect::<Result<Vec<_>, _>>()?,
                ThetaSpec::Keyword(ThetaKeyword::Auto) => {
                    chain.auto_theta(&payment_id).map_err(anyhow::Error::msg)?
                }
            };
            let verdict = pay_verify(&chain.ledger, &payment_id, &theta)?;
            let decision = match &verdict.decision {
                anh_core::accounting::PayDecision::Accept => json!("Accept"),
                other => serde_json::to_value(other)?,
            };
            print(&json!({
                "decision": decision,
                "gas_executed": verdict.cost.gas_executed,
                "gas_charged": verdict.cost.gas_charged,
                "txs_executed": verdict.cost.txs_executed,
                "bound": verdict.bound.bound().to_string(),
                "theta": theta.iter().map(|t| chain.display(t)).collect::<Vec<_>>(),
            }));
            Ok(ExitCode::SUCCESS)
        }
        Command::AuditOath { input, oath } => {
            let chain = input.chain()?;
            let audit = audit_oath(&chain.ledger, &chain.labels.tx(&oath)?)?;
            print(&serde_json::to_value(&audit)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::DumpIndex { input, account } => {
            let chain = input.chain()?;
            let id = chain.names.account(&account)?;
            let end: Position = chain.ledger.end();
            let index = chain.ledger.index();
            let sent: Vec<Value> = index
                .sent_by(&id, end)
                .iter()
                .map(|p| {
                    json!({
                        "tx": chain.display(&p.locator.tx_id),
                        "position": p.locator.position(),
                        "outlay": p.outlay,
                    })
                })
                .collect();
            let touching: Vec<Value> = index
                .txs_touching(&StateKey::Balance(id), end)
                .iter()
                .map(|l| json!({"tx": chain.display(&l.tx_id), "position": l.position()}))
                .collect();
            print(&json!({
                "account": account,
                "id": id,
                "sent": sent,
                "balance_writers": touching,
                "total_expenses": index.total_expenses(&id, end).to_string(),
            }));
            Ok(ExitCode::SUCCESS)
        }
        Command::Attack {
            kind,
            count,
            burn,
            victim,
            q,
            seed,
        } => {
            if count == 0 {
                bail!("--count must be at least 1");
            }
            let attack = run_attack(kind.into(), count, burn, TokenAmount(q), &victim, seed)?;
            let blocks: Vec<Value> = attack
                .ledger
                .blocks()
                .iter()
                .map(|b| json!({"height": b.height(), "hash": b.hash(), "txs": b.txs().len()}))
                .collect();
            print(&json!({
                "scenario": {
                    "kind": AttackKind::from(kind),
                    "count": count,
                    "burn": burn,
                    "q": q,
                    "seed": seed,
                    "victim": attack.victim,
                    "payroll_call": attack.payroll_call,
                    "payment": attack.payment,
                    "blocks": blocks,
                },
                "metrics": attack.metrics,
            }));
            Ok(ExitCode::SUCCESS)
        }
    }
}
