//! End-to-end runs of a scenario: generate the workload, train the reward
//! models, run one allocation method, and collect results for reporting.
//!
//! Run directory layout:
//!
//! ```text
//! chains.csv                  index, chain, cost_flops
//! workload.json               users and per-period request ids
//! greenflow.ckpt              joint reward model
//! greenflow_loss.csv          epoch, loss
//! cras_stage<k>.ckpt          single-stage models (k = 1-based stage index)
//! cras_stage<k>_loss.csv
//! runs/<method>-<budget>/periods.csv
//! runs/<method>-<budget>/summary.json
//! ```

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::allocator::{read_period_csv, write_period_csv, PeriodOutcome, PeriodRecord, PublishedPrice};
use crate::chain::{generate_chains, ActionChain, StageConfig};
use crate::error::{Error, Result};
use crate::pfec::Run;
use crate::reward::{RewardModel, TrainReport};
use crate::scenario::Scenario;
use crate::simulator::{
    cras_stage_chains, generate_population, generate_requests, label_dataset, run_cras, run_equal, run_greenflow,
    train_cras, CrasStage, GroundTruth, SyntheticUser,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    GreenFlow,
    Equal,
    Cras,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::GreenFlow, Method::Equal, Method::Cras];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::GreenFlow => "greenflow",
            Method::Equal => "equal",
            Method::Cras => "cras",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown method {s:?} (expected greenflow, equal or cras)")))
    }
}

/// Everything the scenario determines before any training.
#[derive(Debug, Clone)]
pub struct World {
    pub stages: Vec<StageConfig>,
    pub chains: Vec<ActionChain>,
    pub truth: GroundTruth,
    pub users: Vec<SyntheticUser>,
    pub requests: Vec<Vec<usize>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct WorkloadFile {
    users: Vec<SyntheticUser>,
    requests: Vec<Vec<usize>>,
}

impl World {
    pub fn generate(scenario: &Scenario) -> Result<Self> {
        scenario.validate()?;
        let stages = scenario.stages.clone();
        let chains = generate_chains(&stages)?;
        let truth = GroundTruth::new(&stages, scenario.e)?;
        let users = generate_population(&scenario.workload.population, &stages, scenario.population_seed())?;
        let requests = generate_requests(&scenario.workload.stream, users.len(), scenario.request_seed())?;
        Ok(Self { stages, chains, truth, users, requests })
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join("chains.csv"))?;
        w.write_record(["index", "chain", "cost_flops"])?;
        for c in &self.chains {
            let label: Vec<String> = c.actions.iter().map(|a| format!("{}@{}", a.model_id, a.item_scale)).collect();
            w.write_record([c.index.to_string(), label.join(">"), c.cost_flops.to_string()])?;
        }
        w.flush()?;
        let file = WorkloadFile { users: self.users.clone(), requests: self.requests.clone() };
        fs::write(dir.join("workload.json"), serde_json::to_string(&file)?)?;
        Ok(())
    }

    /// Rebuilds the world from the scenario plus the workload written by
    /// [`World::write`].
    pub fn load(scenario: &Scenario, dir: &Path) -> Result<Self> {
        scenario.validate()?;
        let path = dir.join("workload.json");
        let text = fs::read_to_string(&path)
            .map_err(|e| Error::MissingArtifact(format!("{} ({e}); run generate first", path.display())))?;
        let file: WorkloadFile = serde_json::from_str(&text)?;
        let stages = scenario.stages.clone();
        Ok(Self {
            chains: generate_chains(&stages)?,
            truth: GroundTruth::new(&stages, scenario.e)?,
            stages,
            users: file.users,
            requests: file.requests,
        })
    }

    pub fn mean_arrivals(&self) -> f64 {
        self.requests.iter().map(Vec::len).sum::<usize>() as f64 / self.requests.len().max(1) as f64
    }

    /// Chain served by EQUAL: the configured one, or else the most expensive
    /// chain whose cost fits the per-request budget (the cheapest if none
    /// fits).
    pub fn equal_chain(&self, scenario: &Scenario, budget_per_period: f64) -> Result<usize> {
        if let Some(j) = scenario.allocator.equal_chain {
            return if j < self.chains.len() {
                Ok(j)
            } else {
                Err(Error::config(format!("allocator.equal_chain {j} out of range")))
            };
        }
        let per_request = budget_per_period / self.mean_arrivals().max(1.0);
        let mut best: Option<&ActionChain> = None;
        for c in self.chains.iter().filter(|c| c.cost_flops <= per_request) {
            if best.is_none_or(|b| c.cost_flops > b.cost_flops) {
                best = Some(c);
            }
        }
        let fallback = || {
            self.chains.iter().min_by(|a, b| a.cost_flops.total_cmp(&b.cost_flops).then(a.index.cmp(&b.index)))
        };
        Ok(best.or_else(fallback).map(|c| c.index).unwrap())
    }
}

/// Trained reward models of one scenario.
#[derive(Debug, Clone)]
pub struct Models {
    pub greenflow: RewardModel,
    pub cras: Vec<CrasStage>,
}

pub struct Training {
    pub models: Models,
    pub greenflow_report: TrainReport,
    pub cras_reports: Vec<TrainReport>,
}

pub fn train_models(scenario: &Scenario, world: &World) -> Result<Training> {
    let t = &scenario.training;
    let data = label_dataset(
        &world.users,
        &world.chains,
        &world.truth,
        t.samples_per_user,
        t.label_noise,
        scenario.label_seed(),
    )?;
    let mut greenflow = RewardModel::new(scenario.reward.clone(), &world.stages)?;
    let greenflow_report = crate::reward::train(&mut greenflow, &data, &world.chains, &t.optimizer)?;
    let (cras, cras_reports) = train_cras(
        &world.stages,
        &world.chains,
        &world.users,
        &world.truth,
        &scenario.reward,
        &t.optimizer,
        t.samples_per_user,
        t.label_noise,
        scenario.cras_label_seed(),
    )?
    .into_iter()
    .unzip();
    Ok(Training { models: Models { greenflow, cras }, greenflow_report, cras_reports })
}

fn cras_file(stage: &StageConfig) -> String {
    format!("cras_stage{}", stage.stage_index)
}

fn write_loss(report: &TrainReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "loss"])?;
    for (epoch, loss) in report.loss_trace.iter().enumerate() {
        w.write_record([epoch.to_string(), loss.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

impl Training {
    pub fn write(&self, world: &World, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.models.greenflow.save(&dir.join("greenflow.ckpt"))?;
        write_loss(&self.greenflow_report, &dir.join("greenflow_loss.csv"))?;
        for (stage, report) in self.models.cras.iter().zip(&self.cras_reports) {
            let name = cras_file(&world.stages[stage.position]);
            stage.model.save(&dir.join(format!("{name}.ckpt")))?;
            write_loss(report, &dir.join(format!("{name}_loss.csv")))?;
        }
        Ok(())
    }
}

fn load_checkpoint(path: &Path) -> Result<RewardModel> {
    if !path.exists() {
        return Err(Error::MissingArtifact(format!("{}; run train first", path.display())));
    }
    RewardModel::load(path)
}

impl Models {
    pub fn load(world: &World, dir: &Path) -> Result<Self> {
        let greenflow = load_checkpoint(&dir.join("greenflow.ckpt"))?;
        let mut cras = Vec::new();
        for (position, stage) in world.stages.iter().enumerate().filter(|(_, s)| !s.fixed) {
            let model = load_checkpoint(&dir.join(format!("{}.ckpt", cras_file(stage))))?;
            let options = cras_stage_chains(&world.chains, &world.stages, position);
            cras.push(CrasStage { position, model, options });
        }
        Ok(Self { greenflow, cras })
    }
}

/// The summary record of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub method: String,
    pub budget: f64,
    pub revenue_at_e: f64,
    pub consumed_flops: f64,
}

#[derive(Debug, Clone)]
pub struct MethodRun {
    pub method: Method,
    pub budget: f64,
    pub outcome: PeriodOutcome,
}

impl MethodRun {
    pub fn summary(&self) -> Summary {
        Summary {
            method: self.method.to_string(),
            budget: self.budget,
            revenue_at_e: self.outcome.total_revenue(),
            consumed_flops: self.outcome.total_consumed(),
        }
    }

    pub fn name(&self) -> String {
        run_name(self.method.as_str(), self.budget)
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let out = dir.join("runs").join(self.name());
        fs::create_dir_all(&out)?;
        write_period_csv(&self.outcome.records, &out.join("periods.csv"))?;
        fs::write(out.join("summary.json"), serde_json::to_string_pretty(&self.summary())? + "\n")?;
        Ok(out)
    }
}

pub fn run_name(method: &str, budget: f64) -> String {
    format!("{method}-{budget:e}")
}

/// Runs `method` over the world's request stream at `budget_per_period`.
pub fn run_method(
    scenario: &Scenario,
    world: &World,
    models: Option<&Models>,
    method: Method,
    budget_per_period: f64,
) -> Result<MethodRun> {
    let config = scenario.allocator.period_config(budget_per_period);
    config.validate()?;
    let need = || Error::MissingArtifact(format!("{method} needs trained reward models; run train first"));
    let outcome = match method {
        Method::GreenFlow => {
            let models = models.ok_or_else(need)?;
            let price = PublishedPrice::new(config.lambda_init);
            run_greenflow(&world.requests, &world.users, &world.chains, &world.truth, &models.greenflow, &config, &price)?
        }
        Method::Equal => {
            let chain = world.equal_chain(scenario, budget_per_period)?;
            run_equal(&world.requests, &world.users, &world.chains, &world.truth, chain, budget_per_period)?
        }
        Method::Cras => {
            let models = models.ok_or_else(need)?;
            run_cras(
                &world.requests,
                &world.users,
                &world.stages,
                &world.chains,
                &world.truth,
                &models.cras,
                &config,
                world.mean_arrivals(),
            )?
        }
    };
    Ok(MethodRun { method, budget: budget_per_period, outcome })
}

/// A finished run read back from its directory.
#[derive(Debug, Clone)]
pub struct StoredRun {
    pub name: String,
    pub summary: Summary,
    pub records: Vec<PeriodRecord>,
}

impl StoredRun {
    pub fn read(dir: &Path) -> Result<Self> {
        let summary_path = dir.join("summary.json");
        let text = fs::read_to_string(&summary_path)
            .map_err(|e| Error::MissingArtifact(format!("{} ({e})", summary_path.display())))?;
        let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        Ok(Self { name, summary: serde_json::from_str(&text)?, records: read_period_csv(&dir.join("periods.csv"))? })
    }

    pub fn to_pfec(&self) -> Run {
        Run { method: self.name.clone(), budget: self.summary.budget, records: self.records.clone() }
    }
}

impl From<&MethodRun> for StoredRun {
    fn from(run: &MethodRun) -> Self {
        Self { name: run.name(), summary: run.summary(), records: run.outcome.records.clone() }
    }
}

/// Every run under `<dir>/runs`, sorted by name.
pub fn read_runs(dir: &Path) -> Result<Vec<StoredRun>> {
    let root = dir.join("runs");
    let entries = fs::read_dir(&root).map_err(|e| Error::MissingArtifact(format!("{} ({e})", root.display())))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry?.path();
        if path.is_dir() {
            paths.push(path);
        }
    }
    paths.sort();
    paths.iter().map(|p| StoredRun::read(p)).collect()
}

/// One plot-ready row per (method, budget).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: String,
    pub budget: f64,
    pub revenue_at_e: f64,
    pub consumed_flops: f64,
    pub overhead_flops: f64,
}

pub fn sweep_rows(runs: &[StoredRun]) -> Vec<SweepRow> {
    let mut rows: Vec<SweepRow> = runs
        .iter()
        .map(|r| SweepRow {
            method: r.summary.method.clone(),
            budget: r.summary.budget,
            revenue_at_e: r.summary.revenue_at_e,
            consumed_flops: r.summary.consumed_flops,
            overhead_flops: r.records.iter().map(|p| p.overhead_flops).sum(),
        })
        .collect();
    rows.sort_by(|a, b| a.method.cmp(&b.method).then(a.budget.total_cmp(&b.budget)));
    rows
}

pub fn write_sweep_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
