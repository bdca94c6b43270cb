use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::population::SyntheticUser;
use crate::chain::{ActionChain, StageConfig};
use crate::error::{Error, Result};
use crate::reward::Example;

/// Expected clicks among the top `e` exposed items:
///
/// ```text
/// r* = alpha * gamma[m_K] * prod_{k >= 2} (1 - exp(-beta * n_k / max N_k))
/// ```
///
/// clamped to `[0, e]`. The product runs over every stage after recall; with
/// the default cascade that is pre-ranking and ranking.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub e: f64,
    /// `(stage position, largest scale)` of every saturating stage.
    saturating: Vec<(usize, f64)>,
    ranking: usize,
}

impl GroundTruth {
    pub fn new(stages: &[StageConfig], e: f64) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::config("stages: empty"));
        }
        if !(e >= 1.0) {
            return Err(Error::config("e must be at least 1"));
        }
        let saturating = stages.iter().enumerate().skip(1).map(|(k, s)| (k, f64::from(s.max_scale()))).collect();
        Ok(Self { e, saturating, ranking: stages.len() - 1 })
    }

    pub fn reward(&self, user: &SyntheticUser, chain: &ActionChain) -> f64 {
        let gamma = user.gamma[chain.actions[self.ranking].model];
        let mut r = user.alpha * gamma;
        for &(k, max) in &self.saturating {
            r *= 1.0 - (-user.beta * f64::from(chain.actions[k].item_scale) / max).exp();
        }
        r.clamp(0.0, self.e)
    }
}

/// Labels `samples_per_user` distinct chains per user, drawn uniformly, with
/// `r*` plus Gaussian noise of standard deviation `noise` (clamped at zero).
/// Each example's calibration field is the user's activity level.
pub fn label_dataset(
    users: &[SyntheticUser],
    chains: &[ActionChain],
    truth: &GroundTruth,
    samples_per_user: usize,
    noise: f64,
    seed: u64,
) -> Result<Vec<Example>> {
    if samples_per_user == 0 {
        return Err(Error::config("samples_per_user must be at least 1"));
    }
    if chains.is_empty() {
        return Err(Error::config("no chains to label"));
    }
    let dist = Normal::new(0.0, noise).map_err(|e| Error::config(format!("label noise: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = samples_per_user.min(chains.len());
    let mut out = Vec::with_capacity(users.len() * k);
    for user in users {
        let mut picked = rand::seq::index::sample(&mut rng, chains.len(), k).into_vec();
        picked.sort_unstable();
        for j in picked {
            let chain = &chains[j];
            let label = truth.reward(user, chain) + if noise > 0.0 { dist.sample(&mut rng) } else { 0.0 };
            out.push(Example { features: user.features.clone(), chain: j, reward: label.max(0.0), field: user.activity.index() });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{default_stages, generate_chains};
    use crate::simulator::population::{generate_population, Activity, PopulationConfig};

    fn user(alpha: f64, beta: f64, gamma: Vec<f64>) -> SyntheticUser {
        SyntheticUser { id: 0, activity: Activity::Mid, group: 2, alpha, beta, gamma, features: vec![0.0; 12] }
    }

    #[test]
    fn grid_corner_closed_form() {
        let stages = default_stages();
        let chains = generate_chains(&stages).unwrap();
        let truth = GroundTruth::new(&stages, 20.0).unwrap();
        let top = chains.iter().find(|c| c.actions[1].item_scale == 1500 && c.actions[2].item_scale == 200).unwrap();
        let u = user(8.0, 3.0, vec![0.9, 0.9]);
        let expected = 8.0 * 0.9 * (1.0 - (-3.0f64).exp()).powi(2);
        assert!((truth.reward(&u, top) - expected).abs() < 1e-12);
        assert!(truth.reward(&user(1e3, 50.0, vec![1.0, 1.0]), top) == 20.0);
    }

    #[test]
    fn suited_model_scores_higher() {
        let stages = default_stages();
        let chains = generate_chains(&stages).unwrap();
        let truth = GroundTruth::new(&stages, 20.0).unwrap();
        let din = stages[2].model_position("DIN").unwrap();
        let mut gamma = vec![0.7, 0.7];
        gamma[din] = 0.95;
        let u = user(4.0, 5.0, gamma);
        for a in &chains {
            for b in &chains {
                if a.actions[1].item_scale == b.actions[1].item_scale
                    && a.actions[2].item_scale == b.actions[2].item_scale
                    && a.actions[2].model == din
                    && b.actions[2].model != din
                {
                    assert!(truth.reward(&u, a) > truth.reward(&u, b));
                }
            }
        }
    }

    #[test]
    fn monotone_in_scales_and_beta() {
        let stages = default_stages();
        let chains = generate_chains(&stages).unwrap();
        let truth = GroundTruth::new(&stages, 20.0).unwrap();
        let users = generate_population(&PopulationConfig { size: 100, ..Default::default() }, &stages, 2).unwrap();
        for u in &users {
            let mut fast = u.clone();
            fast.beta *= 2.0;
            for a in &chains {
                assert!(truth.reward(&fast, a) >= truth.reward(u, a));
                for b in &chains {
                    let dominated = a.actions[2].model == b.actions[2].model
                        && (1..3).all(|k| a.actions[k].item_scale <= b.actions[k].item_scale);
                    if dominated {
                        assert!(truth.reward(u, a) <= truth.reward(u, b));
                    }
                }
            }
        }
    }

    #[test]
    fn dataset_sizes_and_noise() {
        let stages = default_stages();
        let chains = generate_chains(&stages).unwrap();
        let truth = GroundTruth::new(&stages, 20.0).unwrap();
        let users = generate_population(&PopulationConfig { size: 30, ..Default::default() }, &stages, 2).unwrap();

        let clean = label_dataset(&users, &chains, &truth, 4, 0.0, 1).unwrap();
        assert_eq!(clean.len(), 4 * 30);
        for (i, ex) in clean.iter().enumerate() {
            assert_eq!(ex.reward, truth.reward(&users[i / 4], &chains[ex.chain]));
        }

        let full = label_dataset(&users[..2], &chains, &truth, chains.len(), 0.3, 1).unwrap();
        let mut seen: Vec<usize> = full[..chains.len()].iter().map(|e| e.chain).collect();
        seen.dedup();
        assert_eq!(seen, (0..chains.len()).collect::<Vec<_>>());
        assert!(full.iter().all(|e| e.reward >= 0.0));
        assert!(label_dataset(&users, &chains, &truth, 0, 0.1, 1).is_err());
    }
}
