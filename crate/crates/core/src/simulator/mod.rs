//! Synthetic cascade workload: heterogeneous users with a known reward
//! surface, labelled training data, request streams and the baseline
//! allocation strategies.

mod methods;
mod population;
mod truth;
mod workload;

pub use methods::{
    cras_budget_shares, cras_reference, cras_stage_chains, revenue_at_e, run_cras, run_equal, run_greenflow,
    train_cras, CrasStage,
};
pub use population::{
    apportion, generate_population, Activity, ActivityProfile, AffinityGroup, PopulationConfig, SyntheticUser,
};
pub use truth::{label_dataset, GroundTruth};
pub use workload::{generate_requests, Arrivals, Spike, WorkloadConfig};
