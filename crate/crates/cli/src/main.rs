use std::path::PathBuf;
use std::process::ExitCode;

use chainalloc::pfec;
use chainalloc::pipeline::{self, read_runs, run_method, train_models, Method, Models, StoredRun, World};
use chainalloc::scenario::Scenario;
use chainalloc::{Error, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

#[derive(Parser)]
#[command(name = "chainalloc", version, about = "Budgeted computation allocation for cascade ranking systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Scenario file; the built-in default scenario when omitted.
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    /// Root seed, overriding the scenario's.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding the scenario's.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override any scenario field, e.g. `--set allocator.iterations=100`.
    #[arg(long = "set", value_name = "PATH=VALUE", global = true)]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the chain set and the request workload.
    Generate,
    /// Train the joint and per-stage reward models.
    Train,
    /// Run one allocation method over the workload.
    Run {
        #[arg(long, default_value = "greenflow")]
        method: String,
        /// Budget per period in FLOPs; the scenario's when omitted.
        #[arg(long)]
        budget: Option<f64>,
    },
    /// Compare finished runs: PFEC table plus budget-sweep data.
    Report {
        /// Run directory names under `<out>/runs`; all of them when omitted.
        runs: Vec<String>,
        /// Run the deltas are measured against; the first `equal` run by default.
        #[arg(long)]
        baseline: Option<String>,
    },
}

fn load_scenario(common: &Common) -> Result<Scenario> {
    let mut scenario = match &common.scenario {
        Some(path) => Scenario::from_path(path)?,
        None => Scenario::default(),
    };
    scenario = scenario.with_overrides(&common.overrides)?;
    if let Some(seed) = common.seed {
        scenario.seed = seed;
    }
    if let Some(out) = &common.out {
        scenario.output = out.clone();
    }
    scenario.validate()?;
    Ok(scenario)
}

fn execute(cli: Cli) -> Result<()> {
    let scenario = load_scenario(&cli.common)?;
    let out = scenario.output.clone();
    match cli.command {
        Command::Generate => {
            let world = World::generate(&scenario)?;
            world.write(&out)?;
            std::fs::write(out.join("scenario.json"), serde_json::to_string_pretty(&scenario)? + "\n")?;
            println!("{} chains, {} requests over {} periods -> {}", world.chains.len(), world.requests.iter().map(Vec::len).sum::<usize>(), world.requests.len(), out.display());
        }
        Command::Train => {
            let world = World::load(&scenario, &out)?;
            let training = train_models(&scenario, &world)?;
            training.write(&world, &out)?;
            let r = &training.greenflow_report;
            println!("greenflow loss {:.6} -> {:.6} over {} steps", r.initial_loss(), r.final_loss(), r.steps);
            for (stage, r) in training.models.cras.iter().zip(&training.cras_reports) {
                println!("cras stage {} loss {:.6} -> {:.6}", world.stages[stage.position].stage_index, r.initial_loss(), r.final_loss());
            }
        }
        Command::Run { method, budget } => {
            let method: Method = method.parse()?;
            let world = World::load(&scenario, &out)?;
            let models = match method {
                Method::Equal => None,
                _ => Some(Models::load(&world, &out)?),
            };
            let budget = budget.unwrap_or(scenario.allocator.budget_per_period);
            let run = run_method(&scenario, &world, models.as_ref(), method, budget)?;
            let dir = run.write(&out)?;
            info!("wrote {}", dir.display());
            println!("{}", serde_json::to_string(&run.summary())?);
        }
        Command::Report { runs, baseline } => {
            let stored = if runs.is_empty() {
                read_runs(&out)?
            } else {
                runs.iter().map(|name| StoredRun::read(&out.join("runs").join(name))).collect::<Result<Vec<_>>>()?
            };
            if stored.len() < 2 {
                return Err(Error::Comparison(format!("report needs at least 2 runs, found {}", stored.len())));
            }
            let baseline = match baseline {
                Some(b) => b,
                None => stored
                    .iter()
                    .find(|r| r.summary.method == Method::Equal.as_str())
                    .map(|r| r.name.clone())
                    .ok_or_else(|| Error::Comparison("no equal run to compare against; pass --baseline".into()))?,
            };
            let runs: Vec<pfec::Run> = stored.iter().map(StoredRun::to_pfec).collect();
            let rows = pfec::report(&runs, &baseline, &scenario.profile)?;
            pfec::write_report_csv(&rows, &out.join("pfec.csv"))?;
            pipeline::write_sweep_csv(&pipeline::sweep_rows(&stored), &out.join("sweep.csv"))?;
            println!("baseline: {baseline}");
            print!("{}", pfec::render_table(&rows));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
