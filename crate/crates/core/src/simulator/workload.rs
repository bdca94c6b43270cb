use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Requests per period: a constant rate or an explicit schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Arrivals {
    Constant(usize),
    Schedule(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkloadConfig {
    pub periods: usize,
    pub arrivals: Arrivals,
    /// Optional burst: the period's arrivals are multiplied by `factor`.
    pub spike: Option<Spike>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spike {
    pub period: usize,
    pub factor: f64,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        Self { periods: 10, arrivals: Arrivals::Constant(1000), spike: None }
    }
}

impl WorkloadConfig {
    pub fn validate(&self) -> Result<()> {
        if self.periods == 0 {
            return Err(Error::config("workload.periods must be at least 1"));
        }
        if let Arrivals::Schedule(s) = &self.arrivals {
            if s.len() != self.periods {
                return Err(Error::config(format!(
                    "workload.arrivals lists {} periods but workload.periods is {}",
                    s.len(),
                    self.periods
                )));
            }
        }
        if let Some(spike) = &self.spike {
            if spike.period >= self.periods || !(spike.factor >= 0.0) {
                return Err(Error::config("workload.spike: period out of range or negative factor"));
            }
        }
        Ok(())
    }

    pub fn arrivals_per_period(&self) -> Vec<usize> {
        let mut out = match &self.arrivals {
            Arrivals::Constant(n) => vec![*n; self.periods],
            Arrivals::Schedule(s) => s.clone(),
        };
        if let Some(spike) = &self.spike {
            if let Some(n) = out.get_mut(spike.period) {
                *n = (*n as f64 * spike.factor).round() as usize;
            }
        }
        out
    }

    pub fn mean_arrivals(&self) -> f64 {
        let a = self.arrivals_per_period();
        a.iter().sum::<usize>() as f64 / a.len().max(1) as f64
    }
}

/// Period batches of user ids drawn uniformly with replacement.
pub fn generate_requests(config: &WorkloadConfig, population: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    config.validate()?;
    if population == 0 {
        return Err(Error::config("workload needs a non-empty population"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(config
        .arrivals_per_period()
        .into_iter()
        .map(|n| (0..n).map(|_| rng.random_range(0..population)).collect())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spike_multiplies_one_period() {
        let config =
            WorkloadConfig { periods: 4, arrivals: Arrivals::Constant(100), spike: Some(Spike { period: 2, factor: 3.0 }) };
        assert_eq!(config.arrivals_per_period(), vec![100, 100, 300, 100]);
        let batches = generate_requests(&config, 10, 1).unwrap();
        assert_eq!(batches.iter().map(Vec::len).collect::<Vec<_>>(), vec![100, 100, 300, 100]);
        assert!(batches.iter().flatten().all(|&u| u < 10));
        assert_eq!(batches, generate_requests(&config, 10, 1).unwrap());
    }

    #[test]
    fn schedule_length_must_match() {
        let config = WorkloadConfig { periods: 3, arrivals: Arrivals::Schedule(vec![1, 2]), spike: None };
        assert!(config.validate().is_err());
    }

    #[test]
    fn arrivals_parse_from_number_or_list() {
        let a: Arrivals = serde_json::from_str("250").unwrap();
        assert_eq!(a, Arrivals::Constant(250));
        let b: Arrivals = serde_json::from_str("[1, 0, 3]").unwrap();
        assert_eq!(b, Arrivals::Schedule(vec![1, 0, 3]));
    }
}
