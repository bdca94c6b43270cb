//! Budgeted chain assignment by Lagrangian dual descent.
//!
//! Relaxing the budget constraint with a price `lambda >= 0` decouples the
//! requests: each one independently takes `argmax_j R_ij - lambda * c_j`. The
//! nearline solver adjusts `lambda` by projected gradient steps on the dual
//! until the period's consumption meets the budget, then publishes it for the
//! online path.

mod oracle;
mod periods;
mod price;

pub use oracle::exact_oracle;
pub use periods::{
    read_period_csv, run_periods, write_period_csv, write_period_rows, PeriodConfig, PeriodOutcome, PeriodRecord,
};
pub use price::PublishedPrice;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One period's allocation instance.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationProblem {
    /// `rewards[i][j]`: estimated reward of chain `j` for request `i`.
    pub rewards: Vec<Vec<f64>>,
    /// Chain costs `c_j` in FLOPs.
    pub costs: Vec<f64>,
    /// Budget `C` in FLOPs.
    pub budget: f64,
}

impl AllocationProblem {
    pub fn new(rewards: Vec<Vec<f64>>, costs: Vec<f64>, budget: f64) -> Result<Self> {
        let problem = Self { rewards, costs, budget };
        problem.validate()?;
        Ok(problem)
    }

    pub fn validate(&self) -> Result<()> {
        if self.costs.is_empty() {
            return Err(Error::config("allocation problem has no chains"));
        }
        if self.costs.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(Error::config("chain costs must be positive and finite"));
        }
        if !(self.budget.is_finite() && self.budget > 0.0) {
            return Err(Error::config("budget must be positive and finite"));
        }
        for (i, r) in self.rewards.iter().enumerate() {
            if r.len() != self.costs.len() {
                return Err(Error::config(format!(
                    "request {i} has {} rewards for {} chains",
                    r.len(),
                    self.costs.len()
                )));
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::config(format!("request {i} has a non-finite reward")));
            }
        }
        Ok(())
    }

    pub fn max_cost(&self) -> f64 {
        self.costs.iter().copied().fold(0.0, f64::max)
    }

    /// Decisions of every request at price `lambda`.
    pub fn decide_all(&self, lambda: f64) -> Vec<usize> {
        self.rewards.iter().map(|r| decide(r, &self.costs, lambda)).collect()
    }

    /// Total cost of the decisions at price `lambda`.
    pub fn consumption(&self, lambda: f64) -> f64 {
        self.rewards.iter().map(|r| self.costs[decide(r, &self.costs, lambda)]).sum()
    }

    /// Characteristic price: mean reward spread per unit of cost spread.
    pub fn reference_price(&self) -> f64 {
        let cmax = self.max_cost();
        let cmin = self.costs.iter().copied().fold(f64::INFINITY, f64::min);
        let spread_c = if cmax > cmin { cmax - cmin } else { cmax };
        let n = self.rewards.len().max(1) as f64;
        let spread_r: f64 = self
            .rewards
            .iter()
            .map(|r| {
                let hi = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lo = r.iter().copied().fold(f64::INFINITY, f64::min);
                hi - lo
            })
            .sum::<f64>()
            / n;
        let mean_abs: f64 = self.rewards.iter().flatten().map(|v| v.abs()).sum::<f64>()
            / (n * self.costs.len() as f64);
        let r = if spread_r > 0.0 {
            spread_r
        } else if mean_abs > 0.0 {
            mean_abs
        } else {
            1.0
        };
        r / spread_c
    }

    /// Step size `eta0 * reference_price / C`: a relative budget gap of 1
    /// moves the price by `eta0` reference prices.
    pub fn scaled_step(&self, eta0: f64) -> f64 {
        eta0 * self.reference_price() / self.budget
    }
}

/// `argmax_j R_j - lambda * c_j`; ties go to the cheaper chain, then the
/// lower index.
pub fn decide(rewards: &[f64], costs: &[f64], lambda: f64) -> usize {
    debug_assert_eq!(rewards.len(), costs.len());
    let mut best = 0;
    let mut best_score = rewards[0] - costs[0] * lambda;
    for j in 1..rewards.len() {
        let score = rewards[j] - costs[j] * lambda;
        if score > best_score || (score == best_score && costs[j] < costs[best]) {
            best = j;
            best_score = score;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    pub lambda: f64,
    pub period: usize,
    /// `C - consumption` at the returned price.
    pub last_gradient: f64,
    pub iterations: usize,
}

impl DualState {
    pub fn initial(lambda: f64) -> Self {
        Self { lambda: lambda.max(0.0), period: 0, last_gradient: 0.0, iterations: 0 }
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let state: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if !(state.lambda >= 0.0) {
            return Err(Error::config("persisted dual price is negative"));
        }
        Ok(state)
    }
}

/// Projected dual descent: `iterations` rounds of decide-for-all followed by
/// `lambda <- max(0, lambda - eta * (C - consumption))`.
pub fn dual_descent(problem: &AllocationProblem, lambda_init: f64, iterations: usize, eta: f64) -> DualState {
    let mut lambda = lambda_init.max(0.0);
    for _ in 0..iterations {
        let gradient = problem.budget - problem.consumption(lambda);
        lambda = (lambda - eta * gradient).max(0.0);
    }
    DualState {
        lambda,
        period: 0,
        last_gradient: problem.budget - problem.consumption(lambda),
        iterations,
    }
}

/// Per-request chain choices with their totals.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub choices: Vec<usize>,
    pub total_revenue: f64,
    pub total_cost: f64,
}

impl Assignment {
    pub fn from_choices(problem: &AllocationProblem, choices: Vec<usize>) -> Result<Self> {
        if choices.len() != problem.rewards.len() {
            return Err(Error::config("assignment must cover every request exactly once"));
        }
        let mut total_revenue = 0.0;
        let mut total_cost = 0.0;
        for (r, &j) in problem.rewards.iter().zip(&choices) {
            let reward = r.get(j).ok_or_else(|| Error::config(format!("chain index {j} out of range")))?;
            total_revenue += reward;
            total_cost += problem.costs[j];
        }
        Ok(Self { choices, total_revenue, total_cost })
    }

    /// Decisions at a fixed price.
    pub fn at_price(problem: &AllocationProblem, lambda: f64) -> Self {
        Self::from_choices(problem, problem.decide_all(lambda)).expect("decisions index valid chains")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_price_is_reward_argmax() {
        assert_eq!(decide(&[0.3, 2.0, 1.0], &[1.0, 9.0, 2.0], 0.0), 1);
    }

    #[test]
    fn priced_decision() {
        // scores 1.0 - 0.2 = 0.8 and 1.5 - 0.6 = 0.9
        assert_eq!(decide(&[1.0, 1.5], &[2e8, 6e8], 1e-9), 1);
    }

    #[test]
    fn ties_go_to_cheaper_chain() {
        assert_eq!(decide(&[1.0, 1.0], &[5e8, 2e8], 0.0), 1);
        assert_eq!(decide(&[1.0, 1.0], &[5e8, 2e8], 1e-9), 1);
        assert_eq!(decide(&[1.0, 1.0], &[2e8, 2e8], 0.0), 0);
    }

    fn toy() -> AllocationProblem {
        AllocationProblem::new(
            vec![vec![1.0, 1.6, 1.9], vec![0.5, 1.5, 1.7], vec![0.2, 0.4, 0.5]],
            vec![1.0, 2.0, 3.0],
            6.0,
        )
        .unwrap()
    }

    #[test]
    fn slack_budget_drives_price_to_zero() {
        let mut p = toy();
        p.budget = 12.0;
        let s = dual_descent(&p, 0.1, 50, p.scaled_step(0.1));
        assert_eq!(s.lambda, 0.0);
        assert_eq!(p.decide_all(s.lambda), vec![2, 2, 2]);
    }

    #[test]
    fn stationary_price_stays_put() {
        let p = toy();
        // Find a price whose decisions spend exactly C.
        let lam = (0..1000).map(|k| k as f64 * 0.001).find(|&l| p.consumption(l) == p.budget).unwrap();
        let s = dual_descent(&p, lam, 25, 0.7);
        assert_eq!(s.lambda, lam);
        assert_eq!(s.last_gradient, 0.0);
    }

    #[test]
    fn price_never_negative() {
        let mut p = toy();
        p.budget = 100.0;
        let s = dual_descent(&p, 0.0, 10, 10.0);
        assert_eq!(s.lambda, 0.0);
    }

    #[test]
    fn rejects_malformed_problem() {
        assert!(AllocationProblem::new(vec![vec![1.0]], vec![0.0], 1.0).is_err());
        assert!(AllocationProblem::new(vec![vec![1.0, 2.0]], vec![1.0], 1.0).is_err());
        assert!(AllocationProblem::new(vec![vec![f64::NAN]], vec![1.0], 1.0).is_err());
        assert!(AllocationProblem::new(vec![], vec![1.0], 0.0).is_err());
    }

    #[test]
    fn dual_state_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dual.json");
        let s = DualState { lambda: 1.25e-9, period: 4, last_gradient: -3.0e7, iterations: 50 };
        s.save(&path).unwrap();
        assert_eq!(DualState::load(&path).unwrap(), s);
    }

    fn instance() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
        (1usize..6, 1usize..20).prop_flat_map(|(j, n)| {
            (
                prop::collection::vec(prop::collection::vec(0.0f64..10.0, j), n),
                prop::collection::vec(1.0f64..100.0, j),
            )
        })
    }

    proptest! {
        #[test]
        fn consumption_non_increasing_in_price((rewards, costs) in instance(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let p = AllocationProblem::new(rewards, costs, 1.0).unwrap();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(p.consumption(hi) <= p.consumption(lo));
        }

        #[test]
        fn decisions_invariant_under_joint_scaling((rewards, costs) in instance(), lambda in 0.0f64..1.0, k in prop::sample::select(vec![0.25f64, 0.5, 2.0, 4.0, 8.0])) {
            // Power-of-two factors keep the scaled scores exact.
            for r in &rewards {
                let scaled: Vec<f64> = r.iter().map(|v| v * k).collect();
                prop_assert_eq!(decide(r, &costs, lambda), decide(&scaled, &costs, lambda * k));
            }
        }

        #[test]
        fn projection_keeps_price_feasible((rewards, costs) in instance(), budget in 1.0f64..500.0, eta in 1e-4f64..1.0, init in 0.0f64..2.0) {
            let p = AllocationProblem::new(rewards, costs, budget).unwrap();
            prop_assert!(dual_descent(&p, init, 20, eta).lambda >= 0.0);
        }

        #[test]
        fn every_request_assigned_once((rewards, costs) in instance(), lambda in 0.0f64..1.0) {
            let p = AllocationProblem::new(rewards, costs, 1.0).unwrap();
            let a = Assignment::at_price(&p, lambda);
            prop_assert_eq!(a.choices.len(), p.rewards.len());
            prop_assert!(a.choices.iter().all(|&j| j < p.costs.len()));
        }
    }
}
