//! Scenario files: one JSON document that fixes every input of a run.
//!
//! A file is merged over [`Scenario::default`] key by key, so it only needs
//! to spell out what it changes; `stages` is the one section every file must
//! carry. Single fields can be overridden afterwards with dotted paths
//! (`allocator.budget_per_period=2e12`, `stages.1.fixed=true`).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::allocator::PeriodConfig;
use crate::chain::{default_stages, validate_stages, StageConfig};
use crate::error::{Error, Result};
use crate::pfec::HardwareProfile;
use crate::reward::{RewardConfig, TrainConfig};
use crate::simulator::{PopulationConfig, WorkloadConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// Root seed; population, requests and labels derive their seeds from it.
    pub seed: u64,
    /// Exposure depth of revenue@e.
    pub e: f64,
    pub stages: Vec<StageConfig>,
    pub workload: WorkloadSection,
    pub reward: RewardConfig,
    pub training: TrainingSection,
    pub allocator: AllocatorSection,
    pub profile: HardwareProfile,
    pub output: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSection {
    #[serde(flatten)]
    pub stream: WorkloadConfig,
    pub population: PopulationConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSection {
    #[serde(flatten)]
    pub optimizer: TrainConfig,
    /// Labelled chains per user.
    pub samples_per_user: usize,
    /// Standard deviation of the label noise.
    pub label_noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocatorSection {
    pub budget_per_period: f64,
    pub iterations: usize,
    pub eta0: f64,
    pub lambda_init: f64,
    pub solves_per_period: usize,
    pub warm_start: bool,
    /// Chain index served by EQUAL; by default the most expensive chain the
    /// per-request budget affords.
    pub equal_chain: Option<usize>,
}

impl AllocatorSection {
    pub fn period_config(&self, budget_per_period: f64) -> PeriodConfig {
        PeriodConfig {
            budget_per_period,
            iterations: self.iterations,
            eta0: self.eta0,
            lambda_init: self.lambda_init,
            solves_per_period: self.solves_per_period,
            inference_flops_per_request: 0.0,
            warm_start: self.warm_start,
        }
    }
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            seed: 42,
            e: 20.0,
            stages: default_stages(),
            workload: WorkloadSection {
                stream: WorkloadConfig::default(),
                population: PopulationConfig { size: 1000, ..Default::default() },
            },
            reward: RewardConfig { groups: 8, ..Default::default() },
            training: TrainingSection {
                optimizer: TrainConfig { learning_rate: 0.1, batch_size: 8, epochs: 40, ..Default::default() },
                samples_per_user: 32,
                label_noise: 0.02,
            },
            allocator: AllocatorSection {
                budget_per_period: 9.55e11,
                iterations: 50,
                eta0: 0.1,
                lambda_init: 0.0,
                solves_per_period: 1,
                warm_start: true,
                equal_chain: None,
            },
            profile: HardwareProfile::default(),
            output: PathBuf::from("runs/default"),
        }
    }
}

impl Scenario {
    pub fn population_seed(&self) -> u64 {
        self.seed
    }

    pub fn request_seed(&self) -> u64 {
        self.seed.wrapping_add(1)
    }

    pub fn label_seed(&self) -> u64 {
        self.seed.wrapping_add(2)
    }

    pub fn cras_label_seed(&self) -> u64 {
        self.seed.wrapping_add(3)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read scenario {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let user: Value = serde_json::from_str(text).map_err(|e| Error::config(format!("scenario: {e}")))?;
        let Value::Object(fields) = &user else {
            return Err(Error::config("scenario: expected a JSON object"));
        };
        if !fields.contains_key("stages") {
            return Err(Error::config("stages: section is missing"));
        }
        let mut merged = serde_json::to_value(Scenario::default())?;
        merge(&mut merged, user, "")?;
        from_value(merged)
    }

    /// Applies `path=value` overrides; values parse as JSON, or else are
    /// taken as strings.
    pub fn with_overrides<S: AsRef<str>>(self, overrides: &[S]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self);
        }
        let mut doc = serde_json::to_value(&self)?;
        for item in overrides {
            let item = item.as_ref();
            let (path, raw) =
                item.split_once('=').ok_or_else(|| Error::config(format!("override {item:?} is not path=value")))?;
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            *lookup(&mut doc, path)? = value;
        }
        from_value(doc)
    }

    pub fn validate(&self) -> Result<()> {
        validate_stages(&self.stages)?;
        if !(self.e >= 1.0) {
            return Err(Error::config("e must be at least 1"));
        }
        self.workload.stream.validate()?;
        self.workload.population.validate(&self.stages)?;
        if self.reward.feature_dim != self.workload.population.feature_dim {
            return Err(Error::config(format!(
                "reward.feature_dim is {} but workload.population.feature_dim is {}",
                self.reward.feature_dim, self.workload.population.feature_dim
            )));
        }
        if self.training.samples_per_user == 0 {
            return Err(Error::config("training.samples_per_user must be at least 1"));
        }
        if !(self.training.label_noise >= 0.0) {
            return Err(Error::config("training.label_noise must be non-negative"));
        }
        if self.training.optimizer.batch_size == 0 || !(self.training.optimizer.learning_rate > 0.0) {
            return Err(Error::config("training: batch_size must be at least 1 and learning_rate positive"));
        }
        self.allocator.period_config(self.allocator.budget_per_period).validate()?;
        self.profile.validate()
    }
}

fn from_value(doc: Value) -> Result<Scenario> {
    let scenario: Scenario =
        serde_path_to_error::deserialize(doc).map_err(|e| Error::config(format!("{}: {}", e.path(), e.inner())))?;
    scenario.validate()?;
    Ok(scenario)
}

/// Overlays `user` on `base`. Keys must already exist in `base` unless the
/// base value there is an array or null (free-form or optional content).
fn merge(base: &mut Value, user: Value, path: &str) -> Result<()> {
    match (base, user) {
        (Value::Object(b), Value::Object(u)) => {
            for (k, v) in u {
                let child = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v, &child)?,
                    None => return Err(Error::config(format!("{child}: unknown field"))),
                }
            }
            Ok(())
        }
        (slot, v) => {
            *slot = v;
            Ok(())
        }
    }
}

fn lookup<'a>(doc: &'a mut Value, path: &str) -> Result<&'a mut Value> {
    let mut cur = doc;
    for key in path.split('.') {
        cur = match cur {
            Value::Object(map) => map.get_mut(key),
            Value::Array(items) => key.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| Error::config(format!("{path}: no such field")))?;
    }
    Ok(cur)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shipped() -> String {
        std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/default.json")).unwrap()
    }

    #[test]
    fn shipped_file_is_the_default() {
        assert_eq!(Scenario::from_json(&shipped()).unwrap(), Scenario::default());
    }

    #[test]
    fn missing_stages_is_named() {
        let err = Scenario::from_json(r#"{"seed": 1}"#).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("stages"), "{err}");
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let mut doc: Value = serde_json::from_str(&shipped()).unwrap();
        let stages = doc["stages"].take();
        let text = serde_json::json!({ "stages": stages, "workload": { "periods": 3 } }).to_string();
        let s = Scenario::from_json(&text).unwrap();
        assert_eq!(s.workload.stream.periods, 3);
        assert_eq!(s.training, Scenario::default().training);
    }

    #[test]
    fn unknown_and_mistyped_fields_report_paths() {
        let stages = serde_json::to_value(default_stages()).unwrap();
        let unknown = serde_json::json!({ "stages": stages, "allocator": { "budgt": 1 } }).to_string();
        assert!(Scenario::from_json(&unknown).unwrap_err().to_string().contains("allocator.budgt"));
        let mistyped = serde_json::json!({ "stages": stages, "allocator": { "iterations": "many" } }).to_string();
        assert!(Scenario::from_json(&mistyped).unwrap_err().to_string().contains("allocator.iterations"));
    }

    #[test]
    fn dotted_overrides() {
        let s = Scenario::default()
            .with_overrides(&["allocator.budget_per_period=2e12", "stages.1.scales=[1000]", "stages.1.fixed=true", "output=elsewhere"])
            .unwrap();
        assert_eq!(s.allocator.budget_per_period, 2e12);
        assert!(s.stages[1].fixed);
        assert_eq!(s.output, PathBuf::from("elsewhere"));
        assert!(Scenario::default().with_overrides(&["allocator.nope=1"]).is_err());
        assert!(Scenario::default().with_overrides(&["allocator.iterations=0"]).is_err());
        let spiked = Scenario::default().with_overrides(&[r#"workload.spike={"period":2,"factor":3}"#]).unwrap();
        assert_eq!(spiked.workload.stream.arrivals_per_period()[2], 3000);
    }

    #[test]
    fn feature_width_must_agree() {
        let err = Scenario::default().with_overrides(&["reward.feature_dim=20"]).unwrap_err();
        assert!(err.to_string().contains("reward.feature_dim"));
    }
}
