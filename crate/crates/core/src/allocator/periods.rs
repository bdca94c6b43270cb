use std::io::Write;
use std::path::Path;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use super::{decide, dual_descent, AllocationProblem, DualState, PublishedPrice};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PeriodConfig {
    /// Budget `C` for one period, in FLOPs.
    pub budget_per_period: f64,
    /// Dual descent iterations `L` per solve.
    pub iterations: usize,
    /// Relative step size; see [`AllocationProblem::scaled_step`].
    pub eta0: f64,
    pub lambda_init: f64,
    /// Nearline solves per period. With more than one, the period's requests
    /// arrive in that many consecutive slices; each slice is served with the
    /// latest published price and then solved against the budget left in the
    /// period, spread evenly over the remaining slices.
    pub solves_per_period: usize,
    /// Reward-model FLOPs spent scoring every chain for one request.
    pub inference_flops_per_request: f64,
    /// Solve the price on the first batch (with `4 * iterations` steps)
    /// before serving it, as in offline evaluation where the period's
    /// requests are known in advance.
    pub warm_start: bool,
}

impl Default for PeriodConfig {
    fn default() -> Self {
        Self {
            budget_per_period: 1e12,
            iterations: 50,
            eta0: 0.1,
            lambda_init: 0.0,
            solves_per_period: 1,
            inference_flops_per_request: 0.0,
            warm_start: false,
        }
    }
}

impl PeriodConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.budget_per_period.is_finite() && self.budget_per_period > 0.0) {
            return Err(Error::config("allocator.budget must be positive"));
        }
        if self.iterations == 0 {
            return Err(Error::config("allocator.iterations must be at least 1"));
        }
        if !(self.eta0.is_finite() && self.eta0 > 0.0) {
            return Err(Error::config("allocator.eta0 must be positive"));
        }
        if !(self.lambda_init.is_finite() && self.lambda_init >= 0.0) {
            return Err(Error::config("allocator.lambda_init must be non-negative"));
        }
        if self.solves_per_period == 0 {
            return Err(Error::config("allocator.solves_per_period must be at least 1"));
        }
        if !(self.inference_flops_per_request >= 0.0) {
            return Err(Error::config("inference FLOPs per request must be non-negative"));
        }
        Ok(())
    }
}

/// One row of the period log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodRecord {
    pub period: usize,
    /// Price published at the end of the period.
    pub lambda: f64,
    pub requests: usize,
    pub consumed_flops: f64,
    pub budget_flops: f64,
    pub revenue: f64,
    pub solver_iterations: usize,
    pub final_gradient: f64,
    /// Reward-model inference plus solver arithmetic.
    pub overhead_flops: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodOutcome {
    pub records: Vec<PeriodRecord>,
    /// Chain index served to each request, per period.
    pub choices: Vec<Vec<usize>>,
    pub state: DualState,
}

impl PeriodOutcome {
    pub fn total_consumed(&self) -> f64 {
        self.records.iter().map(|r| r.consumed_flops).sum()
    }

    pub fn total_revenue(&self) -> f64 {
        self.records.iter().map(|r| r.revenue).sum()
    }

    pub fn total_overhead(&self) -> f64 {
        self.records.iter().map(|r| r.overhead_flops).sum()
    }
}

/// Serves a stream of period batches online with the last published price
/// and re-solves the price nearline after each batch (or slice of a batch).
///
/// `rewards` gives the estimated reward vector of a request over all chains;
/// `realized` gives the revenue actually earned when a request is served with
/// a chain.
pub fn run_periods<R, FR, FV>(
    periods: &[Vec<R>],
    costs: &[f64],
    config: &PeriodConfig,
    price: &PublishedPrice,
    mut rewards: FR,
    mut realized: FV,
) -> Result<PeriodOutcome>
where
    FR: FnMut(&R) -> Result<Vec<f64>>,
    FV: FnMut(&R, usize) -> f64,
{
    config.validate()?;
    if costs.is_empty() || costs.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
        return Err(Error::config("chain costs must be positive and finite"));
    }
    let c = config.budget_per_period;
    let slices = config.solves_per_period;
    let slice_budget = c / slices as f64;
    let j = costs.len() as f64;

    price.publish(config.lambda_init);
    let mut state = DualState::initial(config.lambda_init);
    let mut warm_flops = 0.0;
    if config.warm_start {
        if let Some(batch) = periods.iter().find(|b| !b.is_empty()) {
            let slice = &batch[..(batch.len() / slices).max(1)];
            let estimates = slice.iter().map(&mut rewards).collect::<Result<Vec<_>>>()?;
            let problem = AllocationProblem::new(estimates, costs.to_vec(), slice_budget)?;
            let steps = 4 * config.iterations;
            let solved = dual_descent(&problem, config.lambda_init, steps, problem.scaled_step(config.eta0));
            debug!("warm start on {} requests: lambda {:.6e}", slice.len(), solved.lambda);
            price.publish(solved.lambda);
            state = solved;
            warm_flops = 2.0 * slice.len() as f64 * j * steps as f64;
        }
    }
    let mut records = Vec::with_capacity(periods.len());
    let mut all_choices = Vec::with_capacity(periods.len());

    for (t, batch) in periods.iter().enumerate() {
        let mut consumed = 0.0;
        let mut revenue = 0.0;
        let mut iterations = 0;
        let mut solver_flops = if t == 0 { warm_flops } else { 0.0 };
        let mut choices = Vec::with_capacity(batch.len());
        if batch.is_empty() {
            warn!("period {t}: no requests, keeping lambda = {:.6e}", state.lambda);
        }
        for k in 0..slices {
            let slice = &batch[k * batch.len() / slices..(k + 1) * batch.len() / slices];
            if slice.is_empty() {
                continue;
            }
            let lambda = price.snapshot();
            let estimates = slice.iter().map(&mut rewards).collect::<Result<Vec<_>>>()?;
            for (request, r) in slice.iter().zip(&estimates) {
                if r.len() != costs.len() {
                    return Err(Error::config(format!(
                        "reward vector has {} entries for {} chains",
                        r.len(),
                        costs.len()
                    )));
                }
                let choice = decide(r, costs, lambda);
                consumed += costs[choice];
                revenue += realized(request, choice);
                choices.push(choice);
            }

            let target = if k + 1 < slices {
                (c - consumed) / (slices - k - 1) as f64
            } else {
                slice_budget
            };
            let problem = AllocationProblem::new(estimates, costs.to_vec(), target.max(1e-6 * slice_budget))?;
            let eta = config.eta0 * problem.reference_price() / slice_budget;
            let solved = dual_descent(&problem, lambda, config.iterations, eta);
            price.publish(solved.lambda);
            debug!(
                "period {t} slice {k}: {} requests, lambda {:.6e} -> {:.6e}, gradient {:.4e}",
                slice.len(),
                lambda,
                solved.lambda,
                solved.last_gradient
            );
            state = DualState { period: t, ..solved };
            iterations += config.iterations;
            // One serving pass plus L solver passes, a multiply-add per chain.
            solver_flops += 2.0 * slice.len() as f64 * j * (config.iterations + 1) as f64;
        }
        records.push(PeriodRecord {
            period: t,
            lambda: price.snapshot(),
            requests: batch.len(),
            consumed_flops: consumed,
            budget_flops: c,
            revenue,
            solver_iterations: iterations,
            final_gradient: state.last_gradient,
            overhead_flops: batch.len() as f64 * config.inference_flops_per_request + solver_flops,
        });
        all_choices.push(choices);
    }
    state.lambda = price.snapshot();
    Ok(PeriodOutcome { records, choices: all_choices, state })
}

pub fn write_period_csv(records: &[PeriodRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_period_csv(path: &Path) -> Result<Vec<PeriodRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::MissingArtifact(format!("{}: {e}", path.display())))?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<PeriodRecord>, _>>()?;
    Ok(rows)
}

/// Writes records as CSV to any writer.
pub fn write_period_rows<W: Write>(records: &[PeriodRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
