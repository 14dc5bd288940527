//! Experiment harness: the Socks Shop scenario catalog, the 24-configuration
//! experiment grid, minimum-SOV selection, an exhaustive oracle for tiny
//! instances, and plot-ready CSV reporting.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::baseline::{self, ScaleVector};
use crate::model::{
    build_two_rack_topology, AllocationPlan, ApplicationSpec, MicroserviceSpec, ModelError,
    Scenario,
};
use crate::nsga2::{self, FrontSnapshot, GaError, GaParams, GenerationTrace, Individual};
use crate::objectives::{self, FitnessTuple, OBJECTIVE_NAMES};

/// Machine capacity classes cycled across the experiment cluster.
pub const CAPACITY_CLASSES: [f64; 4] = [100.0, 200.0, 400.0, 800.0];
/// Failure rate shared by all experiment machines.
pub const MACHINE_FAIL_RATE: f64 = 0.025;
/// Network distance within a rack.
pub const INTRA_RACK_DISTANCE: f64 = 1.0;
/// Network distance across racks.
pub const INTER_RACK_DISTANCE: f64 = 4.0;
/// Generations sampled by the scatter export.
pub const SCATTER_GENERATIONS: [usize; 6] = [0, 10, 20, 30, 40, 50];
/// Refusal bound for the exhaustive oracle.
pub const BRUTE_FORCE_PLAN_LIMIT: f64 = 1e7;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("front is empty")]
    EmptyFront,
    #[error("front contains no feasible solution")]
    NoFeasibleSolution,
    #[error(
        "enumeration would visit ~{estimated_plans:.3e} plans, above the {limit:.1e} guard"
    )]
    EnumerationTooLarge { estimated_plans: f64, limit: f64 },
    #[error(transparent)]
    Ga(#[from] GaError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// The 14-service Socks Shop stack.
pub fn build_socks_shop_stack() -> Vec<MicroserviceSpec> {
    let ms = |name: &str, providers: &[usize], msreq: f64, res: f64, thr: f64, fail: f64| {
        MicroserviceSpec {
            name: name.to_string(),
            providers: providers.to_vec(),
            msreq,
            res,
            thr,
            fail,
        }
    };
    vec![
        ms("worker", &[], 3.2, 0.1, 1.0, 0.04),
        ms("shipping", &[12], 1.8, 11.7, 25.0, 0.02),
        ms("queue-master", &[1, 3], 3.2, 20.0, 200.0, 0.02),
        ms("payment", &[], 1.4, 0.1, 10.0, 0.0002),
        ms("orders", &[1, 3, 9, 10, 11], 2.3, 27.1, 80.0, 0.02),
        ms("login", &[], 0.8, 2.8, 30.0, 0.0001),
        ms("front-end", &[4, 5, 8], 15.1, 3.8, 50.0, 0.003),
        ms("edge-router", &[6], 15.1, 0.5, 10.0, 0.0001),
        ms("catalogue", &[], 12.0, 0.2, 3.0, 0.0006),
        ms("cart", &[11], 3.2, 41.3, 100.0, 0.02),
        ms("accounts", &[11], 0.1, 45.1, 100.0, 0.003),
        ms("weavedb", &[], 3.2, 26.3, 80.0, 0.04),
        ms("rabbitmq", &[0, 2], 3.2, 4.0, 40.0, 0.0006),
        ms("consul", &[], 3.2, 13.2, 100.0, 0.0003),
    ]
}

/// One cell of the experiment grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub machine_count: usize,
    pub ureq: f64,
    pub app_count: usize,
    pub ga: GaParams,
}

impl ExperimentConfig {
    /// Stable label used in output file names, e.g. `m300_u1.0_a1`.
    pub fn label(&self) -> String {
        format!("m{}_u{:.1}_a{}", self.machine_count, self.ureq, self.app_count)
    }
}

/// The full 24-cell grid: machines x workload x application count.
pub fn experiment_grid(ga: GaParams) -> Vec<ExperimentConfig> {
    let mut configs = Vec::with_capacity(24);
    for &machine_count in &[250, 300, 350, 400] {
        for &ureq in &[1.0, 1.5, 2.0] {
            for &app_count in &[1, 2] {
                configs.push(ExperimentConfig {
                    machine_count,
                    ureq,
                    app_count,
                    ga: ga.clone(),
                });
            }
        }
    }
    configs
}

/// Builds the scenario for a grid cell: `app_count` copies of the Socks Shop
/// stack, each with workload `ureq`, over the two-rack experiment cluster.
pub fn build_experiment_scenario(config: &ExperimentConfig) -> Result<Scenario, ModelError> {
    let applications = (0..config.app_count)
        .map(|_| ApplicationSpec {
            ureq: config.ureq,
            microservices: build_socks_shop_stack(),
        })
        .collect();
    let topology = build_two_rack_topology(
        config.machine_count,
        &CAPACITY_CLASSES,
        MACHINE_FAIL_RATE,
        INTRA_RACK_DISTANCE,
        INTER_RACK_DISTANCE,
    )?;
    Scenario::new(applications, topology)
}

/// Picks the front member with the smallest SOV, normalizing per objective
/// over the front itself; ties go to the first occurrence.
pub fn select_min_sov(front: &[Individual]) -> Result<&Individual, HarnessError> {
    if front.is_empty() {
        return Err(HarnessError::EmptyFront);
    }
    let tuples: Vec<FitnessTuple> = front.iter().map(|ind| ind.fitness).collect();
    let index = objectives::min_sov_index(&tuples).ok_or(HarnessError::NoFeasibleSolution)?;
    Ok(&front[index])
}

/// Output of the exhaustive search.
#[derive(Debug, Clone)]
pub struct BruteForceResult {
    /// The non-dominated feasible plans, one representative per distinct
    /// fitness tuple.
    pub front: Vec<(AllocationPlan, FitnessTuple)>,
    pub plans_enumerated: u64,
}

/// Number of allocation lists for one service: sum over scales of
/// machine_count^scale.
fn per_service_list_count(machine_count: u64, max_scale: usize) -> u64 {
    (1..=max_scale as u32).map(|s| machine_count.pow(s)).sum()
}

/// Decodes a candidate index into an allocation list: indices enumerate
/// scale-1 lists first, then scale-2, each block in base-machine_count order.
fn decode_list(mut index: u64, machine_count: u64, max_scale: usize) -> Vec<usize> {
    let mut scale = 1;
    while scale <= max_scale {
        let block = machine_count.pow(scale as u32);
        if index < block {
            let mut list = vec![0usize; scale];
            for slot in (0..scale).rev() {
                list[slot] = (index % machine_count) as usize;
                index /= machine_count;
            }
            return list;
        }
        index -= block;
        scale += 1;
    }
    unreachable!("candidate index out of range");
}

/// Enumerates every scale assignment in [1, max_scale] and every machine
/// assignment, returning the exact non-dominated set of feasible plans.
/// Refuses search spaces above `BRUTE_FORCE_PLAN_LIMIT`.
pub fn brute_force_pareto(
    scenario: &Scenario,
    max_scale: usize,
) -> Result<BruteForceResult, HarnessError> {
    if max_scale == 0 {
        return Err(HarnessError::Model(ModelError::InvalidArgument(
            "max_scale must be >= 1".to_string(),
        )));
    }
    let machine_count = scenario.machine_count() as u64;
    let services = scenario.service_count();
    if services == 0 {
        // The single empty plan; trivially feasible with all-zero objectives.
        let plan = AllocationPlan::new(vec![]);
        let fitness = objectives::evaluate(&plan, scenario);
        return Ok(BruteForceResult {
            front: vec![(plan, fitness)],
            plans_enumerated: 1,
        });
    }

    let per_service_estimate: f64 = (1..=max_scale)
        .map(|s| (machine_count as f64).powi(s as i32))
        .sum();
    let estimated_plans = per_service_estimate.powi(services as i32);
    if estimated_plans > BRUTE_FORCE_PLAN_LIMIT {
        return Err(HarnessError::EnumerationTooLarge {
            estimated_plans,
            limit: BRUTE_FORCE_PLAN_LIMIT,
        });
    }
    let per_service = per_service_list_count(machine_count, max_scale);

    let mut front: Vec<(AllocationPlan, FitnessTuple)> = Vec::new();
    let mut plans_enumerated = 0u64;
    let mut odometer = vec![0u64; services];
    loop {
        let plan = AllocationPlan::new(
            odometer
                .iter()
                .map(|&i| decode_list(i, machine_count, max_scale))
                .collect(),
        );
        plans_enumerated += 1;
        let fitness = objectives::evaluate(&plan, scenario);
        if fitness.feasible {
            let dominated = front.iter().any(|(_, f)| f.dominates(&fitness));
            let duplicate = front.iter().any(|(_, f)| f.values() == fitness.values());
            if !dominated && !duplicate {
                front.retain(|(_, f)| !fitness.dominates(f));
                front.push((plan, fitness));
            }
        }

        // Advance the odometer; stop after the last combination.
        let mut slot = services;
        loop {
            if slot == 0 {
                return Ok(BruteForceResult {
                    front,
                    plans_enumerated,
                });
            }
            slot -= 1;
            odometer[slot] += 1;
            if odometer[slot] < per_service {
                break;
            }
            odometer[slot] = 0;
        }
    }
}

/// Objective values and machine usage of one evaluated plan.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanSummary {
    pub objectives: [f64; 4],
    pub used_machines: usize,
}

fn summarize(plan: &AllocationPlan, scenario: &Scenario) -> PlanSummary {
    let (fitness, view) = objectives::evaluate_with_view(plan, scenario);
    PlanSummary {
        objectives: fitness.values(),
        used_machines: view.used_machines.len(),
    }
}

/// Side-by-side result of one configuration: the NSGA-II minimum-SOV solution
/// against the baseline scheduler run at the same scale levels.
#[derive(Debug, Clone)]
pub struct ComparisonRow {
    pub machine_count: usize,
    pub ureq: f64,
    pub app_count: usize,
    /// Scale levels shared by both plans.
    pub scale_vector: ScaleVector,
    pub nsga2: PlanSummary,
    /// The baseline summary, or the scheduling error that prevented one.
    pub baseline: Result<PlanSummary, String>,
}

/// Everything produced for one grid cell.
#[derive(Debug, Clone)]
pub struct ConfigOutcome {
    pub config: ExperimentConfig,
    pub row: ComparisonRow,
    pub trace: GenerationTrace,
    pub snapshots: Vec<FrontSnapshot>,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-configuration seed derived from the master seed and the config's grid
/// index, so appending configs never perturbs earlier results.
pub fn config_seed(master_seed: u64, index: usize) -> u64 {
    splitmix64(master_seed ^ splitmix64(index as u64 + 1))
}

/// Result of optimizing one scenario and scheduling the baseline at the
/// minimum-SOV solution's scale levels.
#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    /// Scale levels of the minimum-SOV solution, shared with the baseline.
    pub scale_vector: ScaleVector,
    pub nsga2: PlanSummary,
    pub baseline: Result<PlanSummary, String>,
    pub trace: GenerationTrace,
    pub snapshots: Vec<FrontSnapshot>,
    pub front_size: usize,
}

/// Optimizes a scenario, picks the minimum-SOV front member and schedules the
/// baseline at its scale levels. A baseline scheduling failure is recorded,
/// not raised.
pub fn run_scenario(
    scenario: &Scenario,
    params: &GaParams,
    scatter: bool,
) -> Result<ScenarioOutcome, HarnessError> {
    let snapshot_generations: &[usize] = if scatter { &SCATTER_GENERATIONS } else { &[] };
    let outcome = nsga2::run_with_snapshots(scenario, params, snapshot_generations)?;
    let front_size = outcome.front.len();

    let (scale_vector, nsga2, baseline) = match select_min_sov(&outcome.front) {
        Ok(best) => {
            let scale_vector = ScaleVector::from_plan(&best.plan);
            let baseline = baseline::schedule_least_requested(scenario, &scale_vector)
                .map(|plan| summarize(&plan, scenario))
                .map_err(|e| e.to_string());
            (
                scale_vector,
                PlanSummary {
                    objectives: best.fitness.values(),
                    used_machines: best.used_machines,
                },
                baseline,
            )
        }
        // Reachable only when the population holds no feasible plan at all.
        Err(e) => (
            ScaleVector::from_plan(&AllocationPlan::new(vec![])),
            PlanSummary {
                objectives: [f64::INFINITY; 4],
                used_machines: 0,
            },
            Err(e.to_string()),
        ),
    };

    Ok(ScenarioOutcome {
        scale_vector,
        nsga2,
        baseline,
        trace: outcome.trace,
        snapshots: outcome.snapshots,
        front_size,
    })
}

fn run_config(
    config: &ExperimentConfig,
    seed: u64,
    scatter: bool,
) -> Result<ConfigOutcome, HarnessError> {
    let scenario = build_experiment_scenario(config)?;
    let mut params = config.ga.clone();
    params.seed = seed;
    let outcome = run_scenario(&scenario, &params, scatter)?;
    Ok(ConfigOutcome {
        config: config.clone(),
        row: ComparisonRow {
            machine_count: config.machine_count,
            ureq: config.ureq,
            app_count: config.app_count,
            scale_vector: outcome.scale_vector,
            nsga2: outcome.nsga2,
            baseline: outcome.baseline,
        },
        trace: outcome.trace,
        snapshots: outcome.snapshots,
    })
}

/// Runs every configuration, optimizing and then scheduling the baseline at
/// the minimum-SOV solution's scale levels. Configs run in parallel across
/// `workers` threads; outputs are ordered and seeded by config index, so the
/// result is independent of the worker count.
pub fn run_experiment_grid(
    configs: &[ExperimentConfig],
    master_seed: u64,
    workers: usize,
    scatter: bool,
) -> Result<Vec<ConfigOutcome>, HarnessError> {
    for config in configs {
        config.ga.validate()?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| {
        configs
            .par_iter()
            .enumerate()
            .map(|(index, config)| run_config(config, config_seed(master_seed, index), scatter))
            .collect()
    })
}

fn fmt_f64(v: f64) -> String {
    // `Display` prints the shortest round-trip representation; infinities
    // come out as "inf", which parses back via str::parse::<f64>.
    format!("{v}")
}

/// Writes the per-generation trace: min/mean/minSOV per objective plus
/// machine-usage and container statistics over the front.
pub fn write_generation_csv(trace: &GenerationTrace, path: &Path) -> io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let mut header = String::from("generation");
    for name in OBJECTIVE_NAMES {
        header.push_str(&format!(",{name}_min,{name}_mean,{name}_minSOV"));
    }
    header.push_str(",usedMachines_min,usedMachines_mean,containers_min,containers_mean,frontSize");
    writeln!(out, "{header}")?;
    for r in &trace.records {
        let mut line = r.generation.to_string();
        for o in 0..r.objective_min.len() {
            line.push_str(&format!(
                ",{},{},{}",
                fmt_f64(r.objective_min[o]),
                fmt_f64(r.objective_mean[o]),
                fmt_f64(r.objective_min_sov[o]),
            ));
        }
        line.push_str(&format!(
            ",{},{},{},{},{}",
            r.used_machines_min,
            fmt_f64(r.used_machines_mean),
            r.containers_min,
            fmt_f64(r.containers_mean),
            r.front_size
        ));
        writeln!(out, "{line}")?;
    }
    out.flush()
}

/// Writes the side-by-side grid results. A failed baseline schedule shows as
/// infinite objectives and zero used machines.
pub fn write_comparison_csv(rows: &[ComparisonRow], path: &Path) -> io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let mut header = String::from("machineCount,ureq,appCount");
    for side in ["nsga2", "kubernetes"] {
        for name in OBJECTIVE_NAMES {
            header.push_str(&format!(",{side}_{name}"));
        }
        header.push_str(&format!(",{side}_usedMachines"));
    }
    writeln!(out, "{header}")?;
    for row in rows {
        let mut line = format!("{},{},{}", row.machine_count, fmt_f64(row.ureq), row.app_count);
        for v in row.nsga2.objectives {
            line.push_str(&format!(",{}", fmt_f64(v)));
        }
        line.push_str(&format!(",{}", row.nsga2.used_machines));
        match &row.baseline {
            Ok(summary) => {
                for v in summary.objectives {
                    line.push_str(&format!(",{}", fmt_f64(v)));
                }
                line.push_str(&format!(",{}", summary.used_machines));
            }
            Err(_) => {
                for _ in 0..4 {
                    line.push_str(",inf");
                }
                line.push_str(",0");
            }
        }
        writeln!(out, "{line}")?;
    }
    out.flush()
}

/// Writes one sampled generation's full front, one row per solution.
pub fn write_scatter_csv(snapshot: &FrontSnapshot, path: &Path) -> io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{}", OBJECTIVE_NAMES.join(","))?;
    for fitness in &snapshot.fitness {
        let values = fitness.values();
        writeln!(
            out,
            "{},{},{},{}",
            fmt_f64(values[0]),
            fmt_f64(values[1]),
            fmt_f64(values[2]),
            fmt_f64(values[3])
        )?;
    }
    out.flush()
}

/// Writes all grid outputs under `dir`: one trace CSV per config, scatter
/// CSVs for sampled generations when present, and `comparison.csv`.
pub fn write_grid_outputs(outcomes: &[ConfigOutcome], dir: &Path) -> io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for outcome in outcomes {
        let label = outcome.config.label();
        write_generation_csv(&outcome.trace, &dir.join(format!("trace_{label}.csv")))?;
        for snapshot in &outcome.snapshots {
            write_scatter_csv(
                snapshot,
                &dir.join(format!("scatter_{label}_g{}.csv", snapshot.generation)),
            )?;
        }
    }
    let rows: Vec<ComparisonRow> = outcomes.iter().map(|o| o.row.clone()).collect();
    write_comparison_csv(&rows, &dir.join("comparison.csv"))
}

/// Random instance small enough for the exhaustive oracle: 2-3 services over
/// 3-4 machines, with capacities generous enough that every plan is feasible.
/// The joint (3 services, 4 machines) shape is excluded: its 8000-plan space
/// exceeds the 50x100 search budget the oracle-equivalence check runs with,
/// so exact front recovery cannot be expected there.
pub fn random_tiny_scenario<R: Rng>(rng: &mut R) -> Scenario {
    let service_count = rng.random_range(2..=3);
    let machines = if service_count == 3 {
        3
    } else {
        rng.random_range(3..=4)
    };
    let microservices = (0..service_count)
        .map(|i| MicroserviceSpec {
            name: format!("svc{i}"),
            providers: (0..i).filter(|_| rng.random::<f64>() < 0.4).collect(),
            msreq: rng.random_range(0.5..4.0),
            res: rng.random_range(0.1..2.0),
            thr: rng.random_range(0.5..10.0),
            fail: rng.random_range(0.0..0.08),
        })
        .collect();
    let topology = build_two_rack_topology(
        machines,
        &[400.0, 800.0],
        MACHINE_FAIL_RATE,
        INTRA_RACK_DISTANCE,
        INTER_RACK_DISTANCE,
    )
    .expect("valid tiny topology");
    Scenario::new(
        vec![ApplicationSpec {
            ureq: rng.random_range(0.5..2.0),
            microservices,
        }],
        topology,
    )
    .expect("valid tiny scenario")
}
