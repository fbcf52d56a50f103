//! Minimum-cost covering knapsack: choose items whose amounts reach a target
//! at the least total cost.

use thiserror::Error;

/// Catalogs up to this size are solved exactly.
pub const EXACT_LIMIT: usize = 20;
pub const DEFAULT_EPSILON: f64 = 0.01;
/// Work cap for the scaled dynamic program before falling back to the exact
/// frontier search.
const FPTAS_CELL_LIMIT: u128 = 400_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Item {
    pub amount: u128,
    pub cost: u128,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("all items together provide {available}, short of {needed}")]
pub struct Infeasible {
    pub needed: u128,
    pub available: u128,
}

/// How a selection was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Trivial,
    Exact,
    CertifiedGreedy,
    Scaled,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Selection {
    /// Indices into the input, ascending.
    pub chosen: Vec<usize>,
    pub cost: u128,
    pub amount: u128,
    pub method: Method,
}

fn selection(items: &[Item], mut chosen: Vec<usize>, method: Method) -> Selection {
    chosen.sort_unstable();
    Selection {
        cost: chosen.iter().map(|&i| items[i].cost).sum(),
        amount: chosen.iter().map(|&i| items[i].amount).sum(),
        chosen,
        method,
    }
}

/// Selects items reaching `target`. Items are assumed to be listed in chain
/// order; among optimal sets the exact solver prefers the one containing the
/// earliest item where two sets differ.
pub fn solve(items: &[Item], target: u128, epsilon: f64) -> Result<Selection, Infeasible> {
    if target == 0 {
        return Ok(selection(items, Vec::new(), Method::Trivial));
    }
    let available: u128 = items.iter().map(|i| i.amount).sum();
    if available < target {
        return Err(Infeasible {
            needed: target,
            available,
        });
    }
    if items.len() <= EXACT_LIMIT {
        return Ok(exact(items, target));
    }
    let greedy = greedy(items, target).expect("feasible");
    let lower = lp_lower_bound(items, target);
    if (greedy.cost as f64) <= (1.0 + epsilon) * lower {
        return Ok(Selection {
            method: Method::CertifiedGreedy,
            ..greedy
        });
    }
    Ok(scaled(items, target, epsilon, lower, greedy.cost).unwrap_or_else(|| exact(items, target)))
}

/// Exact optimum by a Pareto frontier over (capped amount, cost).
pub fn exact(items: &[Item], target: u128) -> Selection {
    let n = items.len();
    let words = n.div_ceil(64).max(1);
    // Membership bits with item 0 as the most significant bit of word 0, so
    // that comparing masks compares earliest items first.
    let set = |mask: &mut Vec<u64>, i: usize| mask[i / 64] |= 1 << (63 - i % 64);
    let has = |mask: &[u64], i: usize| mask[i / 64] & (1 << (63 - i % 64)) != 0;
    let mut states: Vec<(u128, u128, Vec<u64>)> = vec![(0, 0, vec![0; words])];
    for (i, item) in items.iter().enumerate() {
        let mut next = states.clone();
        next.extend(states.iter().map(|(a, c, m)| {
            let mut m = m.clone();
            set(&mut m, i);
            ((a + item.amount).min(target), c + item.cost, m)
        }));
        next.sort_unstable_by(|x, y| y.0.cmp(&x.0).then(x.1.cmp(&y.1)).then(y.2.cmp(&x.2)));
        let mut kept: Vec<(u128, u128, Vec<u64>)> = Vec::with_capacity(next.len());
        for s in next {
            // `kept` is sorted by descending amount; its last entry has the
            // cheapest cost, best-preferred among equals, seen so far.
            let keep = match kept.last() {
                None => true,
                Some((_, c, m)) => s.1 < *c || (s.1 == *c && s.2 > *m),
            };
            if keep {
                kept.push(s);
            }
        }
        states = kept;
    }
    let (_, _, mask) = states
        .iter()
        .filter(|s| s.0 == target)
        .min_by(|x, y| x.1.cmp(&y.1).then(y.2.cmp(&x.2)))
        .expect("caller checked feasibility");
    let chosen = (0..n).filter(|&i| has(mask, i)).collect();
    selection(items, chosen, Method::Exact)
}

/// Fills by ascending cost per unit amount, drops items that became
/// redundant, and compares against the cheapest single sufficient item.
pub fn greedy(items: &[Item], target: u128) -> Option<Selection> {
    let mut order: Vec<usize> = (0..items.len()).filter(|&i| items[i].amount > 0).collect();
    order.sort_by(|&a, &b| ratio_cmp(&items[a], &items[b]).then(a.cmp(&b)));
    let mut chosen = Vec::new();
    let mut amount = 0u128;
    for &i in &order {
        if amount >= target {
            break;
        }
        chosen.push(i);
        amount += items[i].amount;
    }
    if amount < target {
        return None;
    }
    // Repair: drop the most expensive items that are no longer needed.
    let mut by_cost = chosen.clone();
    by_cost.sort_by(|&a, &b| items[b].cost.cmp(&items[a].cost).then(b.cmp(&a)));
    for i in by_cost {
        if amount - items[i].amount >= target {
            amount -= items[i].amount;
            chosen.retain(|&c| c != i);
        }
    }
    let filled = selection(items, chosen, Method::CertifiedGreedy);
    let single = (0..items.len())
        .filter(|&i| items[i].amount >= target)
        .min_by(|&a, &b| items[a].cost.cmp(&items[b].cost).then(a.cmp(&b)));
    Some(match single {
        Some(i) if items[i].cost < filled.cost => {
            selection(items, vec![i], Method::CertifiedGreedy)
        }
        _ => filled,
    })
}

fn ratio_cmp(a: &Item, b: &Item) -> std::cmp::Ordering {
    // a.cost / a.amount vs b.cost / b.amount without division.
    (a.cost * b.amount).cmp(&(b.cost * a.amount))
}

/// Optimum of the fractional relaxation, a lower bound on any selection.
pub fn lp_lower_bound(items: &[Item], target: u128) -> f64 {
    let mut order: Vec<&Item> = items.iter().filter(|i| i.amount > 0).collect();
    order.sort_by(|a, b| ratio_cmp(a, b));
    let mut left = target;
    let mut bound = 0.0;
    for item in order {
        if left == 0 {
            break;
        }
        if item.amount >= left {
            bound += item.cost as f64 * left as f64 / item.amount as f64;
            left = 0;
        } else {
            bound += item.cost as f64;
            left -= item.amount;
        }
    }
    bound
}

/// Dynamic program over costs rounded down to multiples of
/// `epsilon * lower / n`, maximizing amount per rounded cost. Within
/// `1 + epsilon` of the optimum. `None` when the table would be too large.
fn scaled(
    items: &[Item],
    target: u128,
    epsilon: f64,
    lower: f64,
    upper: u128,
) -> Option<Selection> {
    let n = items.len();
    let unit = (epsilon * lower / n as f64).floor().max(1.0) as u128;
    let width = upper / unit + n as u128 + 1;
    if width * n as u128 > FPTAS_CELL_LIMIT {
        return None;
    }
    let width = width as usize;
    let scaled_cost: Vec<usize> = items.iter().map(|i| (i.cost / unit) as usize).collect();
    // best[c]: largest capped amount with rounded cost exactly c.
    let mut best: Vec<Option<u128>> = vec![None; width];
    best[0] = Some(0);
    let mut taken = vec![vec![0u64; width.div_ceil(64)]; n];
    for (i, item) in items.iter().enumerate() {
        let w = scaled_cost[i];
        for c in (w..width).rev() {
            if let Some(prev) = best[c - w] {
                let cand = (prev + item.amount).min(target);
                if best[c].is_none_or(|cur| cand > cur) {
                    best[c] = Some(cand);
                    taken[i][c / 64] |= 1 << (c % 64);
                }
            }
        }
    }
    let mut c = (0..width).find(|&c| best[c] == Some(target))?;
    let mut chosen = Vec::new();
    for i in (0..n).rev() {
        if taken[i][c / 64] & (1 << (c % 64)) != 0 {
            chosen.push(i);
            c -= scaled_cost[i];
        }
    }
    let result = selection(items, chosen, Method::Scaled);
    debug_assert!(result.amount >= target);
    Some(result)
}

/// Optimum by enumerating every subset. Test oracle for small inputs.
pub fn brute_force(items: &[Item], target: u128) -> Option<u128> {
    assert!(items.len() <= 24);
    (0u32..1 << items.len())
        .filter_map(|mask| {
            let (amount, cost) = items
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .fold((0u128, 0u128), |(a, c), (_, it)| {
                    (a + it.amount, c + it.cost)
                });
            (amount >= target).then_some(cost)
        })
        .min()
}
