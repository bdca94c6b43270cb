//! The allocation strategies compared on the synthetic stream: GreenFlow
//! (joint dual descent over whole chains), EQUAL (one fixed chain for
//! everyone) and CRAS (independent per-stage allocation).

use super::population::SyntheticUser;
use super::truth::{label_dataset, GroundTruth};
use crate::allocator::{run_periods, PeriodConfig, PeriodOutcome, PeriodRecord, PublishedPrice};
use crate::chain::{ActionChain, ChainIndex, StageAction, StageConfig};
use crate::error::{Error, Result};
use crate::reward::{train, RewardConfig, RewardModel, TrainConfig, TrainReport};

/// Sum of true expected clicks over the served requests.
pub fn revenue_at_e(
    users: &[SyntheticUser],
    requests: &[usize],
    choices: &[usize],
    chains: &[ActionChain],
    truth: &GroundTruth,
) -> f64 {
    requests.iter().zip(choices).map(|(&u, &j)| truth.reward(&users[u], &chains[j])).sum()
}

/// Per-user cache of reward vectors; users recur across periods.
struct Scores<'a> {
    model: &'a RewardModel,
    chains: &'a [ActionChain],
    users: &'a [SyntheticUser],
    cache: Vec<Option<Vec<f64>>>,
}

impl<'a> Scores<'a> {
    fn new(model: &'a RewardModel, chains: &'a [ActionChain], users: &'a [SyntheticUser]) -> Self {
        Self { model, chains, users, cache: vec![None; users.len()] }
    }

    fn get(&mut self, user: usize) -> Result<Vec<f64>> {
        if let Some(r) = &self.cache[user] {
            return Ok(r.clone());
        }
        let r = self.model.predict_all(&self.users[user].features, self.chains)?;
        self.cache[user] = Some(r.clone());
        Ok(r)
    }
}

fn check_requests(periods: &[Vec<usize>], users: &[SyntheticUser]) -> Result<()> {
    if periods.iter().flatten().any(|&u| u >= users.len()) {
        return Err(Error::config("request references a user outside the population"));
    }
    Ok(())
}

/// Dual-descent allocation over `chains` (the full set or any subset).
/// Choices index into `chains`.
pub fn run_greenflow(
    periods: &[Vec<usize>],
    users: &[SyntheticUser],
    chains: &[ActionChain],
    truth: &GroundTruth,
    model: &RewardModel,
    config: &PeriodConfig,
    price: &PublishedPrice,
) -> Result<PeriodOutcome> {
    check_requests(periods, users)?;
    let costs: Vec<f64> = chains.iter().map(|c| c.cost_flops).collect();
    let config = PeriodConfig {
        inference_flops_per_request: chains.len() as f64 * model.inference_flops_per_chain(),
        ..config.clone()
    };
    let mut scores = Scores::new(model, chains, users);
    run_periods(periods, &costs, &config, price, |&u| scores.get(u), |&u, j| truth.reward(&users[u], &chains[j]))
}

/// Everyone gets `chains[chain]`; the budget is only recorded.
pub fn run_equal(
    periods: &[Vec<usize>],
    users: &[SyntheticUser],
    chains: &[ActionChain],
    truth: &GroundTruth,
    chain: usize,
    budget_per_period: f64,
) -> Result<PeriodOutcome> {
    check_requests(periods, users)?;
    let fixed = chains.get(chain).ok_or_else(|| Error::config(format!("fixed chain {chain} out of range")))?;
    let mut records = Vec::with_capacity(periods.len());
    let mut choices = Vec::with_capacity(periods.len());
    for (t, batch) in periods.iter().enumerate() {
        let consumed = batch.len() as f64 * fixed.cost_flops;
        let revenue: f64 = batch.iter().map(|&u| truth.reward(&users[u], fixed)).sum();
        records.push(PeriodRecord {
            period: t,
            lambda: 0.0,
            requests: batch.len(),
            consumed_flops: consumed,
            budget_flops: budget_per_period,
            revenue,
            solver_iterations: 0,
            final_gradient: budget_per_period - consumed,
            overhead_flops: 0.0,
        });
        choices.push(vec![chain; batch.len()]);
    }
    Ok(PeriodOutcome { records, choices, state: crate::allocator::DualState::initial(0.0) })
}

/// Reference action per stage: the lower-median scale of the first model in
/// id order.
pub fn cras_reference(stages: &[StageConfig]) -> Vec<StageAction> {
    stages
        .iter()
        .map(|s| {
            let (model, m) = s.models.iter().enumerate().min_by(|a, b| a.1.id.cmp(&b.1.id)).unwrap();
            StageAction { model_id: m.id.clone(), model, item_scale: s.scales[(s.scales.len() - 1) / 2] }
        })
        .collect()
}

/// Chains that vary only the stage at `position`, every other modelled stage
/// held at its reference action.
pub fn cras_stage_chains(chains: &[ActionChain], stages: &[StageConfig], position: usize) -> Vec<ActionChain> {
    let reference = cras_reference(stages);
    chains
        .iter()
        .filter(|c| {
            c.actions.iter().enumerate().all(|(k, a)| {
                k == position || stages[k].fixed || (a.model == reference[k].model && a.item_scale == reference[k].item_scale)
            })
        })
        .cloned()
        .collect()
}

/// Budget fractions proportional to each stage's reference cost.
pub fn cras_budget_shares(stage_costs: &[f64]) -> Vec<f64> {
    let total: f64 = stage_costs.iter().sum();
    stage_costs.iter().map(|c| c / total).collect()
}

/// A single-stage reward model and the chains it scores.
#[derive(Debug, Clone)]
pub struct CrasStage {
    pub position: usize,
    pub model: RewardModel,
    pub options: Vec<ActionChain>,
}

#[allow(clippy::too_many_arguments)]
pub fn train_cras(
    stages: &[StageConfig],
    chains: &[ActionChain],
    users: &[SyntheticUser],
    truth: &GroundTruth,
    reward: &RewardConfig,
    training: &TrainConfig,
    samples_per_user: usize,
    noise: f64,
    seed: u64,
) -> Result<Vec<(CrasStage, TrainReport)>> {
    let mut out = Vec::new();
    for (position, stage) in stages.iter().enumerate() {
        if stage.fixed {
            continue;
        }
        let options = cras_stage_chains(chains, stages, position);
        let data = label_dataset(users, &options, truth, samples_per_user, noise, seed ^ (position as u64 + 1))?;
        let mut model = RewardModel::for_positions(reward.clone(), stages, &[position])?;
        let report = train(&mut model, &data, &options, training)?;
        out.push((CrasStage { position, model, options }, report));
    }
    Ok(out)
}

fn stage_cost(stages: &[StageConfig], position: usize, action: &StageAction) -> f64 {
    stages[position].models[action.model].flops_per_item * f64::from(action.item_scale)
}

/// Per-stage dual descent with a fixed budget split, composed into one chain
/// per request. `expected_requests` sizes the fixed-stage reservation.
#[allow(clippy::too_many_arguments)]
pub fn run_cras(
    periods: &[Vec<usize>],
    users: &[SyntheticUser],
    stages: &[StageConfig],
    chains: &[ActionChain],
    truth: &GroundTruth,
    cras: &[CrasStage],
    config: &PeriodConfig,
    expected_requests: f64,
) -> Result<PeriodOutcome> {
    check_requests(periods, users)?;
    if cras.is_empty() {
        return Err(Error::config("CRAS needs at least one stage model"));
    }
    let reference = cras_reference(stages);
    let fixed_cost: f64 =
        stages.iter().enumerate().filter(|(_, s)| s.fixed).map(|(k, _)| stage_cost(stages, k, &reference[k])).sum();
    let shares = cras_budget_shares(&cras.iter().map(|s| stage_cost(stages, s.position, &reference[s.position])).collect::<Vec<_>>());
    let variable = (config.budget_per_period - fixed_cost * expected_requests).max(1e-6 * config.budget_per_period);

    let mut per_stage = Vec::with_capacity(cras.len());
    for (stage, share) in cras.iter().zip(&shares) {
        let costs: Vec<f64> = stage.options.iter().map(|c| stage_cost(stages, stage.position, &c.actions[stage.position])).collect();
        let stage_config = PeriodConfig {
            budget_per_period: variable * share,
            inference_flops_per_request: stage.options.len() as f64 * stage.model.inference_flops_per_chain(),
            ..config.clone()
        };
        let mut scores = Scores::new(&stage.model, &stage.options, users);
        let outcome = run_periods(periods, &costs, &stage_config, &PublishedPrice::new(config.lambda_init), |&u| scores.get(u), |_, _| 0.0)?;
        per_stage.push(outcome);
    }

    let index = ChainIndex::new(chains);
    let mut records = Vec::with_capacity(periods.len());
    let mut choices = Vec::with_capacity(periods.len());
    for (t, batch) in periods.iter().enumerate() {
        let mut picked = Vec::with_capacity(batch.len());
        for i in 0..batch.len() {
            let mut key: Vec<(usize, u32)> = reference.iter().map(|a| (a.model, a.item_scale)).collect();
            for (stage, outcome) in cras.iter().zip(&per_stage) {
                let a = &stage.options[outcome.choices[t][i]].actions[stage.position];
                key[stage.position] = (a.model, a.item_scale);
            }
            for k in 1..key.len() {
                if key[k].1 > key[k - 1].1 {
                    let cap = key[k - 1].1;
                    key[k].1 = stages[k].scales.iter().copied().filter(|&n| n <= cap).max().unwrap_or(stages[k].scales[0]);
                }
            }
            let j = index.get(&key).ok_or_else(|| Error::config("CRAS composed a chain outside the chain set"))?;
            picked.push(j);
        }
        let consumed: f64 = picked.iter().map(|&j| chains[j].cost_flops).sum();
        let last = &per_stage.last().unwrap().records[t];
        records.push(PeriodRecord {
            period: t,
            lambda: last.lambda,
            requests: batch.len(),
            consumed_flops: consumed,
            budget_flops: config.budget_per_period,
            revenue: revenue_at_e(users, batch, &picked, chains, truth),
            solver_iterations: per_stage.iter().map(|o| o.records[t].solver_iterations).sum(),
            final_gradient: config.budget_per_period - consumed,
            overhead_flops: per_stage.iter().map(|o| o.records[t].overhead_flops).sum(),
        });
        choices.push(picked);
    }
    let state = per_stage.last().unwrap().state;
    Ok(PeriodOutcome { records, choices, state })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{default_stages, generate_chains};
    use crate::simulator::population::{generate_population, PopulationConfig};

    fn world() -> (Vec<StageConfig>, Vec<ActionChain>, Vec<SyntheticUser>, GroundTruth) {
        let stages = default_stages();
        let chains = generate_chains(&stages).unwrap();
        let users = generate_population(&PopulationConfig { size: 40, ..Default::default() }, &stages, 4).unwrap();
        let truth = GroundTruth::new(&stages, 20.0).unwrap();
        (stages, chains, users, truth)
    }

    #[test]
    fn equal_cost_is_count_times_chain_cost() {
        let (_, chains, users, truth) = world();
        let j = chains.iter().position(|c| c.actions[1].item_scale == 1500 && c.actions[2].item_scale == 200 && c.actions[2].model_id == "DIEN").unwrap();
        let periods = vec![(0..100).map(|i| i % 40).collect::<Vec<_>>(), vec![], (0..300).map(|i| i % 40).collect()];
        let out = run_equal(&periods, &users, &chains, &truth, j, 1e11).unwrap();
        assert_eq!(out.records[0].consumed_flops, 100.0 * chains[j].cost_flops);
        assert_eq!(out.records[1].consumed_flops, 0.0);
        assert_eq!(out.records[1].revenue, 0.0);
        assert_eq!(out.records[2].consumed_flops, 3.0 * out.records[0].consumed_flops);
    }

    #[test]
    fn median_chain_split_arithmetic() {
        let s = cras_budget_shares(&[1.23e8, 7.02e8]);
        assert!((s[0] - 0.149).abs() < 5e-4 && (s[1] - 0.851).abs() < 5e-4);
    }

    #[test]
    fn stage_chains_vary_one_stage() {
        let (stages, chains, _, _) = world();
        assert_eq!(cras_stage_chains(&chains, &stages, 1).len(), 8);
        assert_eq!(cras_stage_chains(&chains, &stages, 2).len(), 16);
    }

    #[test]
    fn homogeneous_revenue() {
        let (_, chains, users, truth) = world();
        let requests = vec![3; 7];
        let r = revenue_at_e(&users, &requests, &[5; 7], &chains, &truth);
        assert!((r - 7.0 * truth.reward(&users[3], &chains[5])).abs() < 1e-12);
        assert_eq!(revenue_at_e(&users, &[], &[], &chains, &truth), 0.0);
    }

    #[test]
    fn greenflow_at_slack_budget_is_argmax() {
        let (stages, chains, users, truth) = world();
        let model = RewardModel::new(RewardConfig::default(), &stages).unwrap();
        let periods = vec![(0..40).collect::<Vec<_>>()];
        let config = PeriodConfig { budget_per_period: 1e15, ..Default::default() };
        let out = run_greenflow(&periods, &users, &chains, &truth, &model, &config, &PublishedPrice::new(0.0)).unwrap();
        for (&u, &j) in periods[0].iter().zip(&out.choices[0]) {
            let r = model.predict_all(&users[u].features, &chains).unwrap();
            assert_eq!(j, crate::allocator::decide(&r, &chains.iter().map(|c| c.cost_flops).collect::<Vec<_>>(), 0.0));
        }
        assert_eq!(out.state.lambda, 0.0);
    }

    #[test]
    fn cras_composes_valid_chains() {
        let (stages, chains, users, truth) = world();
        let training = TrainConfig { epochs: 1, ..Default::default() };
        let cras = train_cras(&stages, &chains, &users, &truth, &RewardConfig::default(), &training, 4, 0.1, 3)
            .unwrap()
            .into_iter()
            .map(|(stage, _)| stage)
            .collect::<Vec<_>>();
        assert_eq!(cras.len(), 2);
        let periods = vec![(0..40).collect::<Vec<_>>(); 3];
        let config = PeriodConfig { budget_per_period: 40.0 * 9e8, ..Default::default() };
        let out = run_cras(&periods, &users, &stages, &chains, &truth, &cras, &config, 40.0).unwrap();
        for (t, picked) in out.choices.iter().enumerate() {
            let consumed: f64 = picked.iter().map(|&j| chains[j].cost_flops).sum();
            assert_eq!(out.records[t].consumed_flops, consumed);
        }
    }
}
