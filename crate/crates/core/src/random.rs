//! Seeded random scenarios for differential and property testing.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::scenario::{
    ClaimSpec, PositionSpec, QuerySpec, Scenario, TxKindSpec, TxSpec, ValueSpec,
};
use crate::vm::gas::GasTable;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomShape {
    pub accounts: usize,
    pub contracts: usize,
    pub txs: usize,
    pub blocks: usize,
    /// Include an accountant posting oath claims.
    pub oaths: bool,
}

impl RandomShape {
    /// Sizes drawn from the seed: at most [`MAX_ACCOUNTS`] accounts and
    /// [`MAX_CONTRACTS`] contracts counting the accountant and its oath
    /// contract, and up to `max_txs` transactions.
    pub fn sample(rng: &mut impl Rng, max_txs: usize) -> Self {
        let txs = rng.gen_range(1..=max_txs.max(1));
        let oaths = rng.gen_bool(0.5);
        let extra = usize::from(oaths);
        Self {
            accounts: rng.gen_range(2..=MAX_ACCOUNTS - extra),
            contracts: rng.gen_range(0..=MAX_CONTRACTS - extra),
            txs,
            blocks: rng.gen_range(1..=txs.clamp(1, 12)),
            oaths,
        }
    }
}

pub const MAX_ACCOUNTS: usize = 20;
pub const MAX_CONTRACTS: usize = 5;
const TEMPLATES: usize = 6;

/// Intrinsic costs low enough that most senders can afford many transactions.
pub fn random_gas_table() -> GasTable {
    GasTable {
        intrinsic_transfer: 10,
        intrinsic_create: 20,
        intrinsic_call: 20,
        intrinsic_oath: 20,
        ..GasTable::default()
    }
}
const ACCOUNTANT: &str = "accountant";
const OATH: &str = "oath";

/// Source of contract template `which`, paying `payee` where it pays.
fn template(which: usize, payee: &str, burn: u64) -> String {
    match which % TEMPLATES {
        // Counter keyed in storage.
        0 => "LOAD n\nPUSH 1\nADD\nSTORE n".to_owned(),
        // Fixed payout from the contract balance.
        1 => format!("PUSH @{payee}\nPUSH 7\nTRANSFER"),
        // Forwards to the account and amount given as arguments.
        2 => "TRANSFER".to_owned(),
        // Pays only on every call after the first.
        3 => format!(
            "LOAD armed\nJUMPIF 5\nPUSH 1\nSTORE armed\nHALT\nPUSH @{payee}\nPUSH 3\nTRANSFER"
        ),
        // Burns, then pays.
        4 => format!("BURN {burn}\nPUSH @{payee}\nPUSH 2\nTRANSFER"),
        // Accumulates its argument, then pays out the running total.
        _ => format!("LOAD acc\nADD\nSTORE acc\nPUSH @{payee}\nLOAD acc\nTRANSFER"),
    }
}

/// A scenario whose every choice derives from `seed`.
pub fn random_scenario(seed: u64, shape: RandomShape) -> Scenario {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let users: Vec<String> = (0..shape.accounts).map(|i| format!("u{i}")).collect();
    let mut genesis = BTreeMap::new();
    for (i, u) in users.iter().enumerate() {
        // The first user is always rich enough to deploy every contract.
        if i == 0 {
            genesis.insert(u.clone(), rng.gen_range(15_000..=50_000));
        } else if rng.gen_bool(0.7) {
            genesis.insert(u.clone(), rng.gen_range(1..=50_000));
        }
    }
    let deployers: Vec<String> = genesis
        .iter()
        .filter(|(_, v)| **v >= 15_000)
        .map(|(u, _)| u.clone())
        .collect();
    let funded: Vec<String> = users
        .iter()
        .filter(|u| genesis.contains_key(*u))
        .cloned()
        .collect();
    let accounts: Vec<String> = users
        .iter()
        .filter(|u| !genesis.contains_key(*u))
        .cloned()
        .collect();
    if shape.oaths {
        genesis.insert(ACCOUNTANT.to_owned(), rng.gen_range(60_000..=100_000));
    }

    let mut contracts = BTreeMap::new();
    let mut kinds = Vec::new();
    for c in 0..shape.contracts {
        let which = rng.gen_range(0..TEMPLATES);
        let payee = users.choose(&mut rng).expect("users").clone();
        contracts.insert(
            format!("c{c}"),
            template(which, &payee, rng.gen_range(1..=200)),
        );
        kinds.push(which);
    }
    if shape.oaths {
        contracts.insert(OATH.to_owned(), "HALT".to_owned());
    }

    let blocks = shape.blocks.max(1);
    let mut schedule: Vec<Vec<TxSpec>> = vec![Vec::new(); blocks];
    let mut counter = 0usize;
    let mut label = |prefix: &str| {
        counter += 1;
        format!("{prefix}{counter}")
    };

    // Deployments go into the first block so later calls find them.
    for c in 0..shape.contracts {
        // Distinct deployers (or the first user) keep creation fees covered.
        let deployer = deployers.get(c).unwrap_or(&users[0]);
        let mut spec = TxSpec::new(TxKindSpec::Create, deployer);
        spec.contract = Some(format!("c{c}"));
        spec.value = rng.gen_range(0..=300);
        spec.label = Some(label("create"));
        schedule[0].push(spec);
    }
    if shape.oaths {
        let mut spec = TxSpec::new(TxKindSpec::Create, ACCOUNTANT);
        spec.contract = Some(OATH.to_owned());
        // A few claims still exceed the deposit and end underfunded.
        spec.value = rng.gen_range(5_000..=40_000);
        schedule[0].push(spec);
    }

    let mut labelled: Vec<(usize, String)> = Vec::new();
    let remaining = shape
        .txs
        .saturating_sub(shape.contracts + usize::from(shape.oaths));
    for _ in 0..remaining {
        let block = rng.gen_range(0..blocks);
        let roll = rng.gen_range(0..100);
        // Mostly funded senders; the rest exercise fee rejection.
        let pool = if rng.gen_bool(0.9) { &funded } else { &users };
        let from = pool.choose(&mut rng).expect("users").clone();
        let kind = match roll {
            0..=54 => TxKindSpec::Transfer,
            55..=84 if shape.contracts > 0 => TxKindSpec::Call,
            85.. if shape.oaths => TxKindSpec::Oath,
            _ => TxKindSpec::Transfer,
        };
        let spec = match kind {
            TxKindSpec::Call => {
                let c = rng.gen_range(0..shape.contracts);
                let mut spec = TxSpec::new(TxKindSpec::Call, &from);
                spec.to = Some(format!("c{c}"));
                spec.value = if rng.gen_bool(0.3) {
                    rng.gen_range(1..=200)
                } else {
                    0
                };
                match kinds[c] {
                    2 => {
                        let payee = users.choose(&mut rng).expect("users");
                        spec.args = vec![format!("@{payee}"), rng.gen_range(0..=150).to_string()];
                    }
                    5 => spec.args = vec![rng.gen_range(0..=40).to_string()],
                    _ => {}
                }
                match rng.gen_range(0..20) {
                    // Missing declarations roll the call back.
                    0 => spec.auto_declare = false,
                    // Too little gas runs out mid-way.
                    1 => {
                        spec.gas_limit =
                            Some(random_gas_table().intrinsic_call + rng.gen_range(0..5))
                    }
                    _ => {}
                }
                spec
            }
            TxKindSpec::Oath => oath_spec(&mut rng, &users, &labelled, blocks),
            _ => {
                let mut spec = TxSpec::new(TxKindSpec::Transfer, &from);
                let to = if shape.contracts > 0 && rng.gen_bool(0.1) {
                    format!("c{}", rng.gen_range(0..shape.contracts))
                } else {
                    users.choose(&mut rng).expect("users").clone()
                };
                spec.to = Some(to);
                // Rare overdrafts roll back; the rest stay small so senders
                // keep enough zero-cost funds for many fees.
                spec.value = match rng.gen_range(0..500) {
                    0..=49 => 0,
                    50 => rng.gen_range(60_000..=100_000),
                    _ => rng.gen_range(1..=500),
                };
                spec
            }
        };
        let name = label("t");
        // Oaths may be dropped below, so claims only name other kinds.
        if kind != TxKindSpec::Oath {
            labelled.push((block, name.clone()));
        }
        schedule[block].push(TxSpec {
            label: Some(name),
            ..spec
        });
    }
    // Oath claims about earlier transactions must not precede them; keep
    // only the ones whose subject sits in an earlier block.
    for (b, txs) in schedule.iter_mut().enumerate() {
        txs.retain(|t| match &t.claim {
            Some(ClaimSpec {
                query: QuerySpec::TransferSucceeded { tx },
                ..
            }) => labelled.iter().any(|(lb, l)| l == tx && *lb < b),
            Some(ClaimSpec {
                query:
                    QuerySpec::ExactBalance {
                        at: PositionSpec::Block(h),
                        ..
                    },
                ..
            }) => (*h as usize) < b + 1,
            _ => true,
        });
    }

    Scenario {
        seed,
        genesis,
        accounts,
        gas_table: Some(random_gas_table()),
        contracts,
        blocks: schedule,
        ..Scenario::default()
    }
}

fn oath_spec(
    rng: &mut ChaCha20Rng,
    users: &[String],
    labelled: &[(usize, String)],
    blocks: usize,
) -> TxSpec {
    let mut spec = TxSpec::new(TxKindSpec::Oath, ACCOUNTANT);
    spec.to = Some(OATH.to_owned());
    let query = if !labelled.is_empty() && rng.gen_bool(0.4) {
        let (_, l) = labelled.choose(rng).expect("non-empty");
        QuerySpec::TransferSucceeded { tx: l.clone() }
    } else {
        QuerySpec::ExactBalance {
            account: users.choose(rng).expect("users").clone(),
            at: PositionSpec::Block(rng.gen_range(0..blocks as u64)),
        }
    };
    let claimed = match query {
        QuerySpec::TransferSucceeded { .. } => ValueSpec::Bool(rng.gen_bool(0.7)),
        _ => ValueSpec::Amount(rng.gen_range(0..=50_000)),
    };
    spec.claim = Some(ClaimSpec {
        query,
        claimed,
        penalty: rng.gen_range(0..=2_000),
    });
    spec
}

/// `count` scenarios with shapes drawn from `seed`.
pub fn scenario_batch(seed: u64, count: usize, max_txs: usize) -> Vec<Scenario> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let shape = RandomShape::sample(&mut rng, max_txs);
            random_scenario(rng.gen(), shape)
        })
        .collect()
}
