use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{Example, RewardModel};
use crate::chain::ActionChain;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Seed of the mini-batch shuffling.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: 0.01, batch_size: 64, epochs: 30, seed: 11 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Full-dataset MSE before training, then after every epoch.
    pub loss_trace: Vec<f64>,
    pub steps: usize,
}

impl TrainReport {
    pub fn initial_loss(&self) -> f64 {
        self.loss_trace[0]
    }

    pub fn final_loss(&self) -> f64 {
        *self.loss_trace.last().unwrap()
    }
}

/// Mini-batch gradient descent on mean squared error.
pub fn train(
    model: &mut RewardModel,
    examples: &[Example],
    chains: &[ActionChain],
    config: &TrainConfig,
) -> Result<TrainReport> {
    if examples.is_empty() {
        return Err(Error::config("training set is empty"));
    }
    if let Some(bad) = examples.iter().find(|e| !(e.reward >= 0.0 && e.reward.is_finite())) {
        return Err(Error::config(format!("training label {} is negative or not finite", bad.reward)));
    }
    if config.batch_size == 0 || !(config.learning_rate > 0.0) {
        return Err(Error::config("training needs batch_size >= 1 and learning_rate > 0"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut grad = vec![0.0; model.params().len()];
    let mut loss_trace = Vec::with_capacity(config.epochs + 1);
    loss_trace.push(model.mse(examples, chains)?);
    let mut steps = 0;

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let batch: Vec<&Example> = batch.iter().map(|&i| &examples[i]).collect();
            grad.fill(0.0);
            let loss = model.accumulate_gradient(&batch, chains, &mut grad)?;
            if !loss.is_finite() {
                return Err(Error::Training { step: steps, loss });
            }
            for (p, g) in model.params_mut().iter_mut().zip(&grad) {
                *p -= config.learning_rate * g;
            }
            steps += 1;
        }
        let loss = model.mse(examples, chains)?;
        if !loss.is_finite() {
            return Err(Error::Training { step: steps, loss });
        }
        loss_trace.push(loss);
    }
    Ok(TrainReport { loss_trace, steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{default_stages, generate_chains};
    use crate::reward::RewardConfig;

    fn setup() -> (RewardModel, Vec<ActionChain>) {
        let stages = default_stages();
        let chains = generate_chains(&stages).unwrap();
        (RewardModel::new(RewardConfig::default(), &stages).unwrap(), chains)
    }

    fn ctx(k: f64) -> Vec<f64> {
        (0..12).map(|i| ((i as f64) * 0.37 + k).sin()).collect()
    }

    #[test]
    fn zero_residual_is_a_fixed_point() {
        let (mut model, chains) = setup();
        let examples: Vec<Example> = (0..10)
            .map(|i| {
                let features = ctx(i as f64);
                let reward = model.predict(&features, &chains[i * 7]).unwrap();
                Example { features, chain: i * 7, reward, field: 0 }
            })
            .collect();
        let refs: Vec<&Example> = examples.iter().collect();
        let (_, grad) = model.loss_and_gradient(&refs, &chains).unwrap();
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        assert!(norm < 1e-12, "gradient norm {norm}");

        let before = model.params().to_vec();
        train(&mut model, &examples, &chains, &TrainConfig { epochs: 1, ..Default::default() }).unwrap();
        let drift = before.iter().zip(model.params()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(drift <= 1e-8, "parameters moved by {drift}");
    }

    #[test]
    fn overfits_a_single_example() {
        let (mut model, chains) = setup();
        let ex = Example { features: ctx(0.5), chain: 77, reward: 2.5, field: 0 };
        let cfg = TrainConfig { epochs: 500, batch_size: 1, learning_rate: 0.02, ..Default::default() };
        let report = train(&mut model, std::slice::from_ref(&ex), &chains, &cfg).unwrap();
        assert_eq!(report.steps, 500);
        let r = model.predict(&ex.features, &chains[77]).unwrap();
        assert!((r - 2.5).powi(2) <= 1e-4, "prediction {r}");
        assert!(report.final_loss() <= report.initial_loss());
    }

    #[test]
    fn rejects_bad_datasets() {
        let (mut model, chains) = setup();
        assert!(train(&mut model, &[], &chains, &TrainConfig::default()).is_err());
        let neg = Example { features: ctx(0.0), chain: 0, reward: -1.0, field: 0 };
        assert!(train(&mut model, &[neg], &chains, &TrainConfig::default()).is_err());
    }

    #[test]
    fn divergence_is_reported_with_step() {
        let (mut model, chains) = setup();
        let ex = Example { features: ctx(0.1), chain: 3, reward: 1e150, field: 0 };
        let cfg = TrainConfig { learning_rate: 1e10, epochs: 20, batch_size: 1, ..Default::default() };
        match train(&mut model, &[ex], &chains, &cfg) {
            Err(Error::Training { .. }) | Err(Error::Numeric { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
