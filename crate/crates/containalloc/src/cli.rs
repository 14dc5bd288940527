//! Command-line interface: single-configuration optimization, the baseline
//! scheduler, the full experiment grid, and the exhaustive oracle for tiny
//! instances. All randomness flows from `--seed`; identical invocations
//! produce byte-identical outputs.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::baseline::{schedule_least_requested, ScaleVector};
use crate::harness::{
    self, brute_force_pareto, build_experiment_scenario, experiment_grid, run_experiment_grid,
    ComparisonRow, ExperimentConfig,
};
use crate::model::{AllocationPlan, Scenario};
use crate::nsga2::{self, GaParams};
use crate::objectives::{self, FitnessTuple, OBJECTIVE_NAMES};
use crate::scenario_file::load_scenario_file;

#[derive(Debug, Parser)]
#[command(
    name = "containalloc",
    version,
    about = "Multi-objective container allocation over a modeled cloud cluster"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimize one configuration and compare against the baseline scheduler
    Optimize(OptimizeArgs),
    /// Run the baseline spreading scheduler at fixed scale levels
    Baseline(BaselineArgs),
    /// Run the full 24-configuration experiment grid
    Grid(GridArgs),
    /// Exhaustively enumerate a tiny instance's Pareto front
    Oracle(OracleArgs),
}

/// Scenario source: the built-in Socks Shop catalog shaped by --machines /
/// --ureq / --apps, or a TOML file.
#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// Machines in the built-in two-rack cluster
    #[arg(long, default_value_t = 300, value_parser = parse_positive_usize)]
    pub machines: usize,
    /// Workload multiplier per application
    #[arg(long, default_value_t = 1.0, value_parser = parse_positive_f64)]
    pub ureq: f64,
    /// Number of application stacks
    #[arg(long, default_value_t = 1, value_parser = parse_positive_usize)]
    pub apps: usize,
    /// Read the scenario from a TOML file instead of the built-in catalog
    #[arg(long)]
    pub scenario: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GaArgs {
    /// Population size (even, >= 2)
    #[arg(long = "pop", default_value_t = 200, value_parser = parse_population)]
    pub pop: usize,
    /// Number of generations
    #[arg(long, default_value_t = 300, value_parser = parse_positive_usize)]
    pub generations: usize,
    /// Per-child mutation probability
    #[arg(long, default_value_t = 0.25, value_parser = parse_probability)]
    pub mutation_prob: f64,
    /// Largest scale drawn when seeding the initial population
    #[arg(long, default_value_t = 10, value_parser = parse_positive_usize)]
    pub max_init_scale: usize,
    /// Master RNG seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl GaArgs {
    fn to_params(&self) -> GaParams {
        GaParams {
            population_size: self.pop,
            generations: self.generations,
            mutation_prob: self.mutation_prob,
            max_init_scale: self.max_init_scale,
            seed: self.seed,
            ..GaParams::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    pub ga: GaArgs,
    /// Output directory for CSV reports
    #[arg(long, env = "CONTAINALLOC_OUT", default_value = "out")]
    pub out: PathBuf,
    /// Also dump the full front at generations 0,10,20,30,40,50
    #[arg(long)]
    pub scatter: bool,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Uniform scale level for every service
    #[arg(long, default_value_t = 1, value_parser = parse_positive_usize)]
    pub scale: usize,
    /// Per-service scale levels, comma separated (overrides --scale)
    #[arg(long, value_delimiter = ',')]
    pub scales: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[command(flatten)]
    pub ga: GaArgs,
    /// Worker threads for running configurations in parallel
    #[arg(long, default_value_t = 1, value_parser = parse_positive_usize)]
    pub workers: usize,
    /// Output directory for CSV reports
    #[arg(long, env = "CONTAINALLOC_OUT", default_value = "out")]
    pub out: PathBuf,
    /// Also dump fronts at generations 0,10,20,30,40,50 per configuration
    #[arg(long)]
    pub scatter: bool,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Largest scale level enumerated per service
    #[arg(long, default_value_t = 2, value_parser = parse_positive_usize)]
    pub max_scale: usize,
    /// Cross-check: run the GA capped to --max-scale and compare fronts
    #[arg(long)]
    pub check_ga: bool,
    /// Population size for --check-ga
    #[arg(long = "pop", default_value_t = 50, value_parser = parse_population)]
    pub pop: usize,
    /// Generations for --check-ga
    #[arg(long, default_value_t = 100, value_parser = parse_positive_usize)]
    pub generations: usize,
    /// RNG seed for --check-ga
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for the oracle front CSV
    #[arg(long, env = "CONTAINALLOC_OUT", default_value = "out")]
    pub out: PathBuf,
}

fn parse_positive_usize(s: &str) -> Result<usize, String> {
    let v: usize = s.parse().map_err(|e| format!("{e}"))?;
    if v == 0 {
        return Err("must be >= 1".to_string());
    }
    Ok(v)
}

fn parse_positive_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if !(v > 0.0) {
        return Err("must be > 0".to_string());
    }
    Ok(v)
}

fn parse_population(s: &str) -> Result<usize, String> {
    let v: usize = s.parse().map_err(|e| format!("{e}"))?;
    if v < 2 || v % 2 != 0 {
        return Err("population size must be even and >= 2".to_string());
    }
    Ok(v)
}

fn parse_probability(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if !(0.0..=1.0).contains(&v) {
        return Err("must be in [0, 1]".to_string());
    }
    Ok(v)
}

/// Scenario plus the metadata reported in comparison rows.
struct LoadedScenario {
    scenario: Scenario,
    label: String,
    machine_count: usize,
    ureq: f64,
    app_count: usize,
}

fn load_scenario(args: &ScenarioArgs) -> Result<LoadedScenario> {
    if let Some(path) = &args.scenario {
        let scenario = load_scenario_file(path)
            .with_context(|| format!("loading scenario from {}", path.display()))?;
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "scenario".to_string());
        Ok(LoadedScenario {
            machine_count: scenario.machine_count(),
            ureq: scenario.applications().first().map_or(0.0, |a| a.ureq),
            app_count: scenario.applications().len(),
            scenario,
            label,
        })
    } else {
        let config = ExperimentConfig {
            machine_count: args.machines,
            ureq: args.ureq,
            app_count: args.apps,
            ga: GaParams::default(),
        };
        let scenario = build_experiment_scenario(&config)?;
        Ok(LoadedScenario {
            scenario,
            label: config.label(),
            machine_count: args.machines,
            ureq: args.ureq,
            app_count: args.apps,
        })
    }
}

fn run_optimize(args: &OptimizeArgs) -> Result<()> {
    let loaded = load_scenario(&args.scenario)?;
    let params = args.ga.to_params();
    let outcome = harness::run_scenario(&loaded.scenario, &params, args.scatter)?;

    std::fs::create_dir_all(&args.out)?;
    harness::write_generation_csv(
        &outcome.trace,
        &args.out.join(format!("trace_{}.csv", loaded.label)),
    )?;
    for snapshot in &outcome.snapshots {
        harness::write_scatter_csv(
            snapshot,
            &args
                .out
                .join(format!("scatter_{}_g{}.csv", loaded.label, snapshot.generation)),
        )?;
    }
    let row = ComparisonRow {
        machine_count: loaded.machine_count,
        ureq: loaded.ureq,
        app_count: loaded.app_count,
        scale_vector: outcome.scale_vector.clone(),
        nsga2: outcome.nsga2.clone(),
        baseline: outcome.baseline.clone(),
    };
    harness::write_comparison_csv(std::slice::from_ref(&row), &args.out.join("comparison.csv"))?;

    println!(
        "{}: front size {}, minSOV objectives [{}], {} machines in use; reports in {}",
        loaded.label,
        outcome.front_size,
        outcome
            .nsga2
            .objectives
            .iter()
            .map(|v| format!("{v:.4}"))
            .collect::<Vec<_>>()
            .join(", "),
        outcome.nsga2.used_machines,
        args.out.display()
    );
    if let Err(e) = &outcome.baseline {
        println!("baseline scheduling failed: {e}");
    }
    Ok(())
}

fn run_baseline(args: &BaselineArgs) -> Result<()> {
    let loaded = load_scenario(&args.scenario)?;
    let counts = match &args.scales {
        Some(counts) => counts.clone(),
        None => vec![args.scale; loaded.scenario.service_count()],
    };
    let scales = ScaleVector::new(counts)?;
    let plan = schedule_least_requested(&loaded.scenario, &scales)?;
    let (fitness, view) = objectives::evaluate_with_view(&plan, &loaded.scenario);

    println!("{},usedMachines", OBJECTIVE_NAMES.join(","));
    let values = fitness.values();
    println!(
        "{},{},{},{},{}",
        values[0],
        values[1],
        values[2],
        values[3],
        view.used_machines.len()
    );
    Ok(())
}

fn run_grid(args: &GridArgs) -> Result<()> {
    let configs = experiment_grid(args.ga.to_params());
    let outcomes = run_experiment_grid(&configs, args.ga.seed, args.workers, args.scatter)?;
    harness::write_grid_outputs(&outcomes, &args.out)?;
    println!(
        "completed {} configurations; reports in {}",
        outcomes.len(),
        args.out.display()
    );
    Ok(())
}

fn format_plan(plan: &AllocationPlan) -> String {
    plan.alloc
        .iter()
        .map(|list| {
            list.iter()
                .map(|m| m.to_string())
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect::<Vec<_>>()
        .join(";")
}

fn fitness_key(fitness: &FitnessTuple) -> [u64; 4] {
    let v = fitness.values();
    [
        v[0].to_bits(),
        v[1].to_bits(),
        v[2].to_bits(),
        v[3].to_bits(),
    ]
}

fn write_oracle_front(
    front: &[(AllocationPlan, FitnessTuple)],
    path: &Path,
) -> std::io::Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{},plan", OBJECTIVE_NAMES.join(","))?;
    for (plan, fitness) in front {
        let v = fitness.values();
        writeln!(
            out,
            "{},{},{},{},{}",
            v[0],
            v[1],
            v[2],
            v[3],
            format_plan(plan)
        )?;
    }
    out.flush()
}

fn run_oracle(args: &OracleArgs) -> Result<()> {
    let loaded = load_scenario(&args.scenario)?;
    let result = brute_force_pareto(&loaded.scenario, args.max_scale)?;
    std::fs::create_dir_all(&args.out)?;
    let path = args.out.join(format!("oracle_{}.csv", loaded.label));
    write_oracle_front(&result.front, &path)?;
    println!(
        "enumerated {} plans; Pareto front has {} distinct fitness tuples; front written to {}",
        result.plans_enumerated,
        result.front.len(),
        path.display()
    );

    if args.check_ga {
        let params = GaParams {
            population_size: args.pop,
            generations: args.generations,
            max_init_scale: args.max_scale,
            max_scale: Some(args.max_scale),
            seed: args.seed,
            ..GaParams::default()
        };
        let (front, _) = nsga2::run(&loaded.scenario, &params)?;
        let ga_set: BTreeSet<[u64; 4]> = front.iter().map(|i| fitness_key(&i.fitness)).collect();
        let oracle_set: BTreeSet<[u64; 4]> =
            result.front.iter().map(|(_, f)| fitness_key(f)).collect();
        if ga_set == oracle_set {
            println!("GA front matches the oracle front ({} tuples)", oracle_set.len());
        } else {
            let missed = oracle_set.difference(&ga_set).count();
            let extra = ga_set.difference(&oracle_set).count();
            bail!(
                "GA front differs from the oracle front: {missed} oracle tuples missed, {extra} spurious"
            );
        }
    }
    Ok(())
}

/// Dispatches a parsed command line.
pub fn execute(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Optimize(args) => run_optimize(args),
        Command::Baseline(args) => run_baseline(args),
        Command::Grid(args) => run_grid(args),
        Command::Oracle(args) => run_oracle(args),
    }
}
