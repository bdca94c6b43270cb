use chainalloc::allocator::{decide, PublishedPrice};
use chainalloc::pfec;
use chainalloc::pipeline::{run_method, train_models, Method, Models, StoredRun, Training, World};
use chainalloc::reward::RewardModel;
use chainalloc::scenario::Scenario;
use chainalloc::simulator::{run_greenflow, GroundTruth};

fn scenario(extra: &[&str]) -> Scenario {
    let mut overrides = vec!["workload.population.size=300", "workload.arrivals=300", "workload.periods=4"];
    overrides.extend_from_slice(extra);
    Scenario::default().with_overrides(&overrides).unwrap()
}

fn trained(s: &Scenario) -> (World, Training) {
    let world = World::generate(s).unwrap();
    let training = train_models(s, &world).unwrap();
    (world, training)
}

#[test]
fn slack_budget_serves_each_user_their_best_chain() {
    let s = scenario(&["training.epochs=2"]);
    let (world, training) = trained(&s);
    let run = run_method(&s, &world, Some(&training.models), Method::GreenFlow, 1e18).unwrap();
    let costs: Vec<f64> = world.chains.iter().map(|c| c.cost_flops).collect();
    for (batch, picked) in world.requests.iter().zip(&run.outcome.choices) {
        for (&u, &j) in batch.iter().zip(picked) {
            let r = training.models.greenflow.predict_all(&world.users[u].features, &world.chains).unwrap();
            assert_eq!(j, decide(&r, &costs, 0.0));
        }
    }
    assert!(run.outcome.records.iter().all(|r| r.lambda == 0.0));
}

#[test]
fn one_free_stage_makes_cras_and_greenflow_agree() {
    let s = scenario(&["stages.1.scales=[1000]", "stages.1.fixed=true", "training.samples_per_user=16"]);
    let (world, training) = trained(&s);
    assert_eq!(world.chains.len(), 16);
    // Away from the cheapest chain's cost, where pacing error rather than the
    // allocation decides revenue.
    for budget in [300.0 * 9e8, 300.0 * 1.1e9] {
        let gf = run_method(&s, &world, Some(&training.models), Method::GreenFlow, budget).unwrap().outcome.total_revenue();
        let cras = run_method(&s, &world, Some(&training.models), Method::Cras, budget).unwrap().outcome.total_revenue();
        assert!((gf / cras - 1.0).abs() <= 0.02, "greenflow {gf} cras {cras}");
    }
}

#[test]
fn training_loss_falls_steadily() {
    let s = scenario(&[]);
    let (_, training) = trained(&s);
    let trace = &training.greenflow_report.loss_trace;
    assert!(training.greenflow_report.final_loss() < 0.5 * training.greenflow_report.initial_loss());
    for w in trace.windows(2) {
        assert!(w[1] <= 1.05 * w[0], "loss rose from {} to {}", w[0], w[1]);
    }
}

#[test]
fn zero_epochs_keeps_initialization_and_checkpoints_round_trip() {
    let s = scenario(&["training.epochs=0"]);
    let (world, training) = trained(&s);
    let fresh = RewardModel::new(s.reward.clone(), &world.stages).unwrap();
    assert_eq!(training.models.greenflow.params(), fresh.params());

    let dir = tempfile::tempdir().unwrap();
    training.write(&world, dir.path()).unwrap();
    let loaded = Models::load(&world, dir.path()).unwrap();
    for u in world.users.iter().take(20) {
        let a = training.models.greenflow.predict_all(&u.features, &world.chains).unwrap();
        let b = loaded.greenflow.predict_all(&u.features, &world.chains).unwrap();
        assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }
    assert_eq!(loaded.cras.len(), training.models.cras.len());
}

#[test]
fn greenflow_matches_equal_revenue_with_far_less_compute() {
    let s = Scenario::default().with_overrides(&["workload.population.size=500", "workload.periods=5"]).unwrap();
    let (world, training) = trained(&s);
    // EQUAL on the most expensive chain versus GreenFlow at 60% of its spend.
    let top = world.chains.iter().map(|c| c.cost_flops).fold(0.0, f64::max);
    let full = top * world.mean_arrivals();
    let equal = run_method(&s, &world, None, Method::Equal, full).unwrap();
    let gf = run_method(&s, &world, Some(&training.models), Method::GreenFlow, 0.6 * full).unwrap();
    let runs = [StoredRun::from(&equal).to_pfec(), StoredRun::from(&gf).to_pfec()];
    let rows = pfec::report(&runs, &runs[0].method, &s.profile).unwrap();
    assert!(rows[1].flops_delta_pct <= -35.0, "{:?}", rows[1]);
    assert!(rows[1].revenue_delta_pct >= -1.0, "{:?}", rows[1]);
    assert!(rows[1].total_flops == rows[1].rs_flops + rows[1].overhead_flops && rows[1].overhead_flops > 0.0);
}

#[test]
fn reported_consumption_is_the_sum_of_chain_costs() {
    let s = scenario(&["training.epochs=1"]);
    let (world, training) = trained(&s);
    for m in Method::ALL {
        let run = run_method(&s, &world, Some(&training.models), m, 300.0 * 1e9).unwrap();
        for (rec, picked) in run.outcome.records.iter().zip(&run.outcome.choices) {
            let sum: f64 = picked.iter().map(|&j| world.chains[j].cost_flops).sum();
            assert_eq!(rec.consumed_flops, sum, "{m}");
        }
    }
}

#[test]
fn unbounded_budget_reaches_the_per_user_optimum() {
    let s = scenario(&[]);
    let (world, training) = trained(&s);
    let truth = GroundTruth::new(&world.stages, s.e).unwrap();
    let optimum: f64 = world
        .requests
        .iter()
        .flatten()
        .map(|&u| world.chains.iter().map(|c| truth.reward(&world.users[u], c)).fold(0.0, f64::max))
        .sum();
    let config = s.allocator.period_config(1e18);
    let gf = run_greenflow(&world.requests, &world.users, &world.chains, &truth, &training.models.greenflow, &config, &PublishedPrice::new(0.0))
        .unwrap()
        .total_revenue();
    let cras = run_method(&s, &world, Some(&training.models), Method::Cras, 1e18).unwrap().outcome.total_revenue();
    assert!(gf >= 0.97 * optimum, "greenflow {gf} optimum {optimum}");
    assert!(cras >= 0.97 * optimum, "cras {cras} optimum {optimum}");
}
