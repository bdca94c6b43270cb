//! Cascade stages, model pools and action-chain enumeration.
//!
//! An action chain fixes, for every stage of the cascade, which model runs
//! and how many candidate items it scores. The candidate set is the cartesian
//! product of `(model, scale)` over the non-fixed stages, restricted to chains
//! whose item scales never grow from one stage to the next.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A trained ranker available at one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInstance {
    pub id: String,
    /// FLOPs needed to score a single candidate item.
    pub flops_per_item: f64,
    /// AUC-like quality in (0.5, 1.0); only the simulator's ground truth reads it.
    pub quality: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    /// 1-based position of the stage in the cascade.
    pub stage_index: usize,
    #[serde(default)]
    pub fixed: bool,
    pub models: Vec<ModelInstance>,
    /// Item-scale set, strictly increasing.
    pub scales: Vec<u32>,
}

impl StageConfig {
    fn name(&self) -> String {
        format!("stages[{}] (stage_index {})", self.stage_index.saturating_sub(1), self.stage_index)
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::config(format!("{}: empty model pool", self.name())));
        }
        if self.scales.is_empty() {
            return Err(Error::config(format!("{}: empty scale set", self.name())));
        }
        if self.scales[0] == 0 {
            return Err(Error::config(format!("{}: item scales must be positive", self.name())));
        }
        if self.scales.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config(format!(
                "{}: scale set must be strictly increasing",
                self.name()
            )));
        }
        if self.fixed && (self.models.len() != 1 || self.scales.len() != 1) {
            return Err(Error::config(format!(
                "{}: a fixed stage needs exactly one model and one scale",
                self.name()
            )));
        }
        for m in &self.models {
            if !(m.flops_per_item.is_finite() && m.flops_per_item > 0.0) {
                return Err(Error::config(format!(
                    "{}: model {} has non-positive flops_per_item",
                    self.name(),
                    m.id
                )));
            }
            if !(m.quality > 0.5 && m.quality < 1.0) {
                return Err(Error::config(format!(
                    "{}: model {} quality {} outside (0.5, 1.0)",
                    self.name(),
                    m.id,
                    m.quality
                )));
            }
        }
        Ok(())
    }

    pub fn max_scale(&self) -> u32 {
        *self.scales.last().expect("validated stage has scales")
    }

    pub fn min_scale(&self) -> u32 {
        self.scales[0]
    }

    /// Position of `n` in the scale set.
    pub fn scale_position(&self, n: u32) -> Option<usize> {
        self.scales.binary_search(&n).ok()
    }

    pub fn model_position(&self, id: &str) -> Option<usize> {
        self.models.iter().position(|m| m.id == id)
    }
}

/// Checks every stage plus the cross-stage constraints of a scenario.
pub fn validate_stages(stages: &[StageConfig]) -> Result<()> {
    if stages.is_empty() {
        return Err(Error::config("stages: at least one stage is required"));
    }
    let mut ids = BTreeSet::new();
    for (pos, stage) in stages.iter().enumerate() {
        if stage.stage_index != pos + 1 {
            return Err(Error::config(format!(
                "stages[{pos}]: stage_index {} out of order (expected {})",
                stage.stage_index,
                pos + 1
            )));
        }
        stage.validate()?;
        for m in &stage.models {
            if !ids.insert(m.id.clone()) {
                return Err(Error::config(format!("stages[{pos}]: duplicate model id {}", m.id)));
            }
        }
        if pos > 0 && stage.min_scale() > stages[pos - 1].max_scale() {
            return Err(Error::config(format!(
                "stages[{pos}]: smallest scale {} exceeds the largest scale {} of the previous stage",
                stage.min_scale(),
                stages[pos - 1].max_scale()
            )));
        }
    }
    if stages.iter().all(|s| s.fixed) {
        return Err(Error::config("stages: at least one stage must be non-fixed"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StageAction {
    pub model_id: String,
    /// Position of the model in its stage's pool.
    pub model: usize,
    pub item_scale: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionChain {
    /// Dense 0-based index within the generated set.
    pub index: usize,
    /// One action per stage, fixed stages included.
    pub actions: Vec<StageAction>,
    pub cost_flops: f64,
}

impl ActionChain {
    /// `(model position, item scale)` per stage; the lookup key of a chain.
    pub fn key(&self) -> Vec<(usize, u32)> {
        self.actions.iter().map(|a| (a.model, a.item_scale)).collect()
    }
}

/// Enumerates every admissible action chain in lexicographic order
/// (stage, model id, scale).
pub fn generate_chains(stages: &[StageConfig]) -> Result<Vec<ActionChain>> {
    validate_stages(stages)?;

    let options: Vec<Vec<StageAction>> = stages
        .iter()
        .map(|stage| {
            let mut models: Vec<(usize, &ModelInstance)> = stage.models.iter().enumerate().collect();
            models.sort_by(|a, b| a.1.id.cmp(&b.1.id));
            models
                .into_iter()
                .flat_map(|(pos, m)| {
                    stage.scales.iter().map(move |&n| StageAction {
                        model_id: m.id.clone(),
                        model: pos,
                        item_scale: n,
                    })
                })
                .collect()
        })
        .collect();

    let mut chains = Vec::new();
    let mut prefix = Vec::with_capacity(stages.len());
    expand(&options, &mut prefix, &mut chains);

    for (index, actions) in chains.iter_mut().enumerate() {
        actions.index = index;
        actions.cost_flops = chain_cost(actions, stages)?;
    }
    Ok(chains)
}

fn expand(options: &[Vec<StageAction>], prefix: &mut Vec<StageAction>, out: &mut Vec<ActionChain>) {
    let depth = prefix.len();
    if depth == options.len() {
        out.push(ActionChain { index: 0, actions: prefix.clone(), cost_flops: 0.0 });
        return;
    }
    for action in &options[depth] {
        if let Some(prev) = prefix.last() {
            if action.item_scale > prev.item_scale {
                continue;
            }
        }
        prefix.push(action.clone());
        expand(options, prefix, out);
        prefix.pop();
    }
}

/// Total FLOPs of a chain: per-item FLOPs times items scored, summed over all
/// stages including fixed ones.
pub fn chain_cost(chain: &ActionChain, stages: &[StageConfig]) -> Result<f64> {
    if chain.actions.len() != stages.len() {
        return Err(Error::config(format!(
            "chain {} has {} actions for {} stages",
            chain.index,
            chain.actions.len(),
            stages.len()
        )));
    }
    let mut total = 0.0;
    for (action, stage) in chain.actions.iter().zip(stages) {
        let model = stage.models.get(action.model).ok_or_else(|| {
            Error::config(format!(
                "chain {} references model #{} missing from stage {}",
                chain.index, action.model, stage.stage_index
            ))
        })?;
        if model.id != action.model_id {
            return Err(Error::config(format!(
                "chain {} names model {} but stage {} slot {} holds {}",
                chain.index, action.model_id, stage.stage_index, action.model, model.id
            )));
        }
        total += model.flops_per_item * f64::from(action.item_scale);
    }
    Ok(total)
}

/// Lookup from per-stage `(model, scale)` keys to chain indices.
#[derive(Debug, Clone)]
pub struct ChainIndex {
    by_key: HashMap<Vec<(usize, u32)>, usize>,
}

impl ChainIndex {
    pub fn new(chains: &[ActionChain]) -> Self {
        Self { by_key: chains.iter().map(|c| (c.key(), c.index)).collect() }
    }

    pub fn get(&self, key: &[(usize, u32)]) -> Option<usize> {
        self.by_key.get(key).copied()
    }
}

/// Stage layout used throughout the experiments: a fixed recall stage, a
/// single pre-ranking model and two competing ranking models.
pub fn default_stages() -> Vec<StageConfig> {
    vec![
        StageConfig {
            stage_index: 1,
            fixed: true,
            models: vec![ModelInstance { id: "DSSM".into(), flops_per_item: 13e3, quality: 0.525 }],
            scales: vec![10_000],
        },
        StageConfig {
            stage_index: 2,
            fixed: false,
            models: vec![ModelInstance { id: "YDNN".into(), flops_per_item: 123e3, quality: 0.581 }],
            scales: (800..=1500).step_by(100).collect(),
        },
        StageConfig {
            stage_index: 3,
            fixed: false,
            models: vec![
                ModelInstance { id: "DIN".into(), flops_per_item: 7020e3, quality: 0.639 },
                ModelInstance { id: "DIEN".into(), flops_per_item: 7098e3, quality: 0.641 },
            ],
            scales: (60..=200).step_by(20).collect(),
        },
    ]
}
