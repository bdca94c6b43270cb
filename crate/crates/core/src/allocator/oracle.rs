//! Exact multiple-choice knapsack solver for small instances.

use super::{AllocationProblem, Assignment};
use crate::error::{Error, Result};

/// Largest DP table width accepted, in cost units.
const MAX_UNITS: f64 = 1e7;

/// Solves the one-chain-per-request budgeted assignment exactly by dynamic
/// programming over budget units of `cost_unit` FLOPs. Chain costs are rounded
/// up and the budget down to whole units, so the returned assignment is
/// feasible for the original problem and optimal for the discretized one.
pub fn exact_oracle(problem: &AllocationProblem, cost_unit: f64) -> Result<Assignment> {
    problem.validate()?;
    if !(cost_unit > 0.0) {
        return Err(Error::config("cost_unit must be positive"));
    }
    let n = problem.rewards.len();
    let worst = n as f64 * problem.max_cost() / cost_unit;
    if worst > MAX_UNITS {
        return Err(Error::OracleInfeasible(format!(
            "DP table of {worst:.3e} units exceeds the {MAX_UNITS:.0e} limit; shrink the instance or coarsen cost_unit"
        )));
    }
    if problem.costs.len() > usize::from(u16::MAX) {
        return Err(Error::OracleInfeasible("more than 65535 chains".into()));
    }

    let units: Vec<usize> = problem.costs.iter().map(|c| (c / cost_unit - 1e-9).ceil() as usize).collect();
    let budget_units = (problem.budget / cost_unit + 1e-9).floor() as usize;
    let min_units = *units.iter().min().unwrap();
    let base = n * min_units;
    if base > budget_units {
        return Err(Error::OracleInfeasible(format!(
            "even the cheapest chain for all {n} requests ({base} units) exceeds the budget ({budget_units} units)"
        )));
    }
    let extra: Vec<usize> = units.iter().map(|u| u - min_units).collect();
    let max_extra = *extra.iter().max().unwrap();
    let cap = (budget_units - base).min(n * max_extra);

    // Chains visited cheapest-first so ties keep the cheaper chain.
    let mut order: Vec<usize> = (0..problem.costs.len()).collect();
    order.sort_by(|&a, &b| problem.costs[a].total_cmp(&problem.costs[b]).then(a.cmp(&b)));

    // best[b]: max revenue of the requests so far with extra cost <= b.
    let mut best = vec![0.0f64; cap + 1];
    let mut next = vec![0.0f64; cap + 1];
    let mut choice = vec![0u16; n * (cap + 1)];
    for (i, rewards) in problem.rewards.iter().enumerate() {
        let row = &mut choice[i * (cap + 1)..(i + 1) * (cap + 1)];
        for b in 0..=cap {
            let mut top = f64::NEG_INFINITY;
            let mut arg = 0usize;
            for &j in &order {
                if extra[j] > b {
                    continue;
                }
                let value = best[b - extra[j]] + rewards[j];
                if value > top {
                    top = value;
                    arg = j;
                }
            }
            next[b] = top;
            row[b] = arg as u16;
        }
        std::mem::swap(&mut best, &mut next);
    }

    let mut choices = vec![0usize; n];
    let mut b = cap;
    for i in (0..n).rev() {
        let j = usize::from(choice[i * (cap + 1) + b]);
        choices[i] = j;
        b -= extra[j];
    }
    Assignment::from_choices(problem, choices)
}
