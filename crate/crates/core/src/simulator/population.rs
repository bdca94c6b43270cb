use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::chain::StageConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activity {
    Low,
    Mid,
    High,
}

impl Activity {
    pub const ALL: [Activity; 3] = [Activity::Low, Activity::Mid, Activity::High];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Users whose ranking-stage affinity favours `suited` (or no model at all).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinityGroup {
    pub suited: Option<String>,
    pub ratio: f64,
}

/// Saturation parameters of one activity level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityProfile {
    pub level: Activity,
    pub ratio: f64,
    /// Amplitude `alpha`: expected clicks at full saturation.
    pub alpha: f64,
    /// Saturation rate `beta`.
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PopulationConfig {
    pub size: usize,
    pub affinity: Vec<AffinityGroup>,
    pub activity: Vec<ActivityProfile>,
    /// Relative uniform jitter applied to each user's alpha and beta.
    pub spread: f64,
    /// Relative affinity penalty on the models a user is not suited to.
    pub affinity_gap: f64,
    /// Standard deviation of the Gaussian noise added to every feature.
    pub feature_noise: f64,
    pub feature_dim: usize,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        Self {
            size: 2000,
            affinity: vec![
                AffinityGroup { suited: Some("DIN".into()), ratio: 0.1 },
                AffinityGroup { suited: Some("DIEN".into()), ratio: 0.3 },
                AffinityGroup { suited: None, ratio: 0.6 },
            ],
            activity: vec![
                ActivityProfile { level: Activity::Low, ratio: 0.5, alpha: 0.3, beta: 20.0 },
                ActivityProfile { level: Activity::Mid, ratio: 0.3, alpha: 0.8, beta: 8.0 },
                ActivityProfile { level: Activity::High, ratio: 0.2, alpha: 2.0, beta: 2.0 },
            ],
            spread: 0.2,
            affinity_gap: 0.25,
            feature_noise: 0.1,
            feature_dim: 12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticUser {
    pub id: usize,
    pub activity: Activity,
    /// Index into [`PopulationConfig::affinity`].
    pub group: usize,
    pub alpha: f64,
    pub beta: f64,
    /// Affinity per ranking-stage model, in pool order.
    pub gamma: Vec<f64>,
    /// Noisy observation of the latent parameters; the only input the reward
    /// model ever sees.
    pub features: Vec<f64>,
}

fn check_ratios(name: &str, ratios: &[f64]) -> Result<()> {
    if ratios.is_empty() || ratios.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
        return Err(Error::config(format!("{name}: ratios must be non-negative")));
    }
    if (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!("{name}: ratios must sum to 1")));
    }
    Ok(())
}

impl PopulationConfig {
    /// Number of features that carry signal; the rest are pure noise.
    pub fn informative_features(&self, ranking_models: usize) -> usize {
        2 + ranking_models + Activity::ALL.len()
    }

    pub fn validate(&self, stages: &[StageConfig]) -> Result<()> {
        if self.size == 0 {
            return Err(Error::config("workload.population.size must be at least 1"));
        }
        check_ratios("workload.population.affinity", &self.affinity.iter().map(|g| g.ratio).collect::<Vec<_>>())?;
        check_ratios("workload.population.activity", &self.activity.iter().map(|a| a.ratio).collect::<Vec<_>>())?;
        if self.activity.iter().any(|a| !(a.alpha > 0.0 && a.beta > 0.0)) {
            return Err(Error::config("workload.population.activity: alpha and beta must be positive"));
        }
        if !(0.0..1.0).contains(&self.spread) || !(0.0..1.0).contains(&self.affinity_gap) {
            return Err(Error::config("workload.population: spread and affinity_gap must lie in [0, 1)"));
        }
        if !(self.feature_noise >= 0.0) {
            return Err(Error::config("workload.population.feature_noise must be non-negative"));
        }
        let ranking = stages.last().ok_or_else(|| Error::config("stages: empty"))?;
        for g in &self.affinity {
            if let Some(id) = &g.suited {
                if ranking.model_position(id).is_none() {
                    return Err(Error::config(format!(
                        "workload.population.affinity: {id} is not a ranking-stage model"
                    )));
                }
            }
        }
        let needed = self.informative_features(ranking.models.len());
        if self.feature_dim < needed {
            return Err(Error::config(format!(
                "workload.population.feature_dim is {} but at least {needed} are needed",
                self.feature_dim
            )));
        }
        Ok(())
    }
}

/// Splits `size` into integer counts proportional to `ratios` by the largest
/// remainder rule (ties to the larger ratio, then the earlier entry).
pub fn apportion(size: usize, ratios: &[f64]) -> Vec<usize> {
    let exact: Vec<f64> = ratios.iter().map(|r| r * size as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| (x + 1e-9).floor() as usize).collect();
    let mut left = size.saturating_sub(counts.iter().sum());
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - counts[a] as f64;
        let rb = exact[b] - counts[b] as f64;
        rb.total_cmp(&ra).then(ratios[b].total_cmp(&ratios[a])).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

fn labels(counts: &[usize], rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut out: Vec<usize> = counts.iter().enumerate().flat_map(|(i, &n)| std::iter::repeat_n(i, n)).collect();
    out.shuffle(rng);
    out
}

/// Draws a population whose affinity groups and activity levels follow the
/// configured ratios exactly (up to rounding).
pub fn generate_population(config: &PopulationConfig, stages: &[StageConfig], seed: u64) -> Result<Vec<SyntheticUser>> {
    config.validate(stages)?;
    let ranking = stages.last().unwrap();
    let q_max = ranking.models.iter().map(|m| m.quality).fold(f64::MIN, f64::max);
    let base: Vec<f64> = ranking
        .models
        .iter()
        .map(|m| if q_max > 0.5 { ((m.quality - 0.5) / (q_max - 0.5)).clamp(0.05, 1.0) } else { 1.0 })
        .collect();
    let alpha_max = config.activity.iter().map(|a| a.alpha).fold(0.0, f64::max) * (1.0 + config.spread);
    let beta_max = config.activity.iter().map(|a| a.beta).fold(0.0, f64::max) * (1.0 + config.spread);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups = labels(&apportion(config.size, &config.affinity.iter().map(|g| g.ratio).collect::<Vec<_>>()), &mut rng);
    let levels = labels(&apportion(config.size, &config.activity.iter().map(|a| a.ratio).collect::<Vec<_>>()), &mut rng);
    let noise = Normal::new(0.0, config.feature_noise).map_err(|e| Error::config(e.to_string()))?;

    let mut users = Vec::with_capacity(config.size);
    for id in 0..config.size {
        let profile = &config.activity[levels[id]];
        let group = groups[id];
        let s = config.spread;
        let alpha = profile.alpha * rng.random_range(1.0 - s..=1.0 + s);
        let beta = profile.beta * rng.random_range(1.0 - s..=1.0 + s);
        let suited = config.affinity[group].suited.as_deref().and_then(|id| ranking.model_position(id));
        let gamma: Vec<f64> = base
            .iter()
            .enumerate()
            .map(|(m, &b)| match suited {
                Some(k) if k != m => b * (1.0 - config.affinity_gap),
                _ => b,
            })
            .collect();

        let mut features = Vec::with_capacity(config.feature_dim);
        features.push(alpha / alpha_max);
        features.push(beta / beta_max);
        features.extend_from_slice(&gamma);
        for level in Activity::ALL {
            features.push(if level == profile.level { 1.0 } else { 0.0 });
        }
        features.resize(config.feature_dim, 0.0);
        for x in features.iter_mut() {
            *x += noise.sample(&mut rng);
        }
        users.push(SyntheticUser { id, activity: profile.level, group, alpha, beta, gamma, features });
    }
    Ok(users)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::default_stages;

    #[test]
    fn group_counts_follow_ratios() {
        let config = PopulationConfig { size: 1000, ..Default::default() };
        let users = generate_population(&config, &default_stages(), 3).unwrap();
        let mut counts = [0; 3];
        for u in &users {
            counts[u.group] += 1;
        }
        assert_eq!(counts, [100, 300, 600]);
    }

    #[test]
    fn single_user_lands_in_largest_group() {
        assert_eq!(apportion(1, &[0.1, 0.3, 0.6]), vec![0, 0, 1]);
        let config = PopulationConfig { size: 1, ..Default::default() };
        let users = generate_population(&config, &default_stages(), 9).unwrap();
        assert_eq!(users[0].group, 2);
        assert_eq!(users[0].activity, Activity::Low);
    }

    #[test]
    fn apportion_preserves_total() {
        for size in [0, 1, 7, 99, 1001] {
            assert_eq!(apportion(size, &[0.2, 0.2, 0.2, 0.4]).iter().sum::<usize>(), size);
        }
    }

    #[test]
    fn same_seed_same_population() {
        let config = PopulationConfig { size: 50, ..Default::default() };
        let a = generate_population(&config, &default_stages(), 5).unwrap();
        let b = generate_population(&config, &default_stages(), 5).unwrap();
        assert_eq!(a, b);
        let c = generate_population(&config, &default_stages(), 6).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn affinity_penalizes_unsuited_models() {
        let stages = default_stages();
        let config = PopulationConfig { size: 200, ..Default::default() };
        let din = stages[2].model_position("DIN").unwrap();
        let dien = stages[2].model_position("DIEN").unwrap();
        for u in generate_population(&config, &stages, 1).unwrap() {
            match u.group {
                0 => assert!(u.gamma[din] > u.gamma[dien]),
                1 => assert!(u.gamma[dien] > u.gamma[din]),
                _ => assert!((u.gamma[din] - u.gamma[dien]).abs() < 0.05),
            }
            assert!(u.gamma.iter().all(|&g| g > 0.0 && g <= 1.0));
            assert_eq!(u.features.len(), 12);
        }
    }

    #[test]
    fn bad_ratios_are_rejected() {
        let mut config = PopulationConfig::default();
        config.affinity[0].ratio = 0.5;
        assert!(matches!(generate_population(&config, &default_stages(), 1), Err(Error::Config(_))));
        let mut config = PopulationConfig::default();
        config.feature_dim = 4;
        assert!(generate_population(&config, &default_stages(), 1).is_err());
    }
}
