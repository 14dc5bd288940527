//! The four objective functions, the capacity constraint, and the SOV
//! scalarization used to pick a single representative solution off a front.
//!
//! All objectives are minimized. An infeasible plan gets the infinity
//! sentinel on every objective; two infeasible tuples never dominate each
//! other, while any feasible tuple dominates any infeasible one.

use thiserror::Error;

use crate::model::{derive_deployment, AllocationPlan, DeploymentView, Scenario};

/// Objective count and canonical ordering used across traces and CSV output.
pub const OBJECTIVE_COUNT: usize = 4;
pub const OBJECTIVE_NAMES: [&str; OBJECTIVE_COUNT] = [
    "thresholdDistance",
    "clusterBalance",
    "systemFailure",
    "networkDistance",
];

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("SOV is undefined for an infeasible fitness tuple")]
    InfeasibleFitness,
}

/// The four objective values of a plan plus its feasibility flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitnessTuple {
    pub threshold_distance: f64,
    pub cluster_balance: f64,
    pub system_failure: f64,
    pub network_distance: f64,
    pub feasible: bool,
}

impl FitnessTuple {
    /// Sentinel for plans violating the capacity constraint.
    pub fn infeasible() -> Self {
        Self {
            threshold_distance: f64::INFINITY,
            cluster_balance: f64::INFINITY,
            system_failure: f64::INFINITY,
            network_distance: f64::INFINITY,
            feasible: false,
        }
    }

    pub fn values(&self) -> [f64; OBJECTIVE_COUNT] {
        [
            self.threshold_distance,
            self.cluster_balance,
            self.system_failure,
            self.network_distance,
        ]
    }

    /// Pareto dominance under minimization: no worse everywhere and strictly
    /// better somewhere. Feasible tuples dominate infeasible ones; two
    /// infeasible tuples are mutually non-dominating.
    pub fn dominates(&self, other: &FitnessTuple) -> bool {
        match (self.feasible, other.feasible) {
            (true, false) => true,
            (false, _) => false,
            (true, true) => {
                let mut strict = false;
                for (a, b) in self.values().iter().zip(other.values()) {
                    if *a > b {
                        return false;
                    }
                    if *a < b {
                        strict = true;
                    }
                }
                strict
            }
        }
    }
}

fn threshold_distance_from_plan(plan: &AllocationPlan, scenario: &Scenario) -> f64 {
    scenario
        .services()
        .iter()
        .zip(&plan.alloc)
        .map(|(svc, list)| (svc.total_load / list.len() as f64 - svc.thr).abs())
        .sum()
}

fn cluster_balance_from_view(view: &DeploymentView, scenario: &Scenario) -> f64 {
    let used = &view.used_machines;
    if used.len() <= 1 {
        return 0.0;
    }
    let machines = scenario.topology().machines();
    let n = used.len() as f64;
    let mean: f64 = used
        .iter()
        .map(|&m| view.per_machine_load[m] / machines[m].cap)
        .sum::<f64>()
        / n;
    let var: f64 = used
        .iter()
        .map(|&m| {
            let usage = view.per_machine_load[m] / machines[m].cap;
            (usage - mean) * (usage - mean)
        })
        .sum::<f64>()
        / n;
    var.sqrt()
}

fn system_failure_from_view(view: &DeploymentView, scenario: &Scenario) -> f64 {
    let machines = scenario.topology().machines();
    scenario
        .services()
        .iter()
        .zip(&view.replica_counts)
        .map(|(svc, counts)| {
            counts
                .iter()
                .map(|&(m, replicas)| machines[m].fail + svc.fail.powi(replicas as i32))
                .product::<f64>()
        })
        .sum()
}

fn network_distance_from_view(view: &DeploymentView, scenario: &Scenario) -> f64 {
    let topology = scenario.topology();
    let mut total = 0.0;
    for (svc, consumer_counts) in scenario.services().iter().zip(&view.replica_counts) {
        if svc.providers.is_empty() {
            continue;
        }
        let mut pair_distance = 0.0;
        let mut provider_containers = 0u64;
        for &provider in &svc.providers {
            for &(m, c) in &view.replica_counts[provider] {
                provider_containers += c as u64;
                for &(m2, c2) in consumer_counts.iter() {
                    pair_distance += (c as f64) * (c2 as f64) * topology.distance(m2, m);
                }
            }
        }
        let scale: u64 = consumer_counts.iter().map(|&(_, c)| c as u64).sum();
        total += pair_distance / (scale as f64 * provider_containers as f64);
    }
    total
}

fn feasible_from_view(view: &DeploymentView, scenario: &Scenario) -> bool {
    view.per_machine_load
        .iter()
        .zip(scenario.topology().machines())
        .all(|(&load, machine)| load < machine.cap)
}

/// Sum over services of |per-container load - thr|.
pub fn threshold_distance(plan: &AllocationPlan, scenario: &Scenario) -> f64 {
    threshold_distance_from_plan(plan, scenario)
}

/// Population standard deviation of the fractional usage of used machines.
/// Machines without containers are not considered.
pub fn cluster_balance(plan: &AllocationPlan, scenario: &Scenario) -> f64 {
    cluster_balance_from_view(&derive_deployment(plan, scenario), scenario)
}

/// Sum over services of the product, over machines hosting the service, of
/// (machine fail rate + service fail rate ^ local replica count).
pub fn system_failure(plan: &AllocationPlan, scenario: &Scenario) -> f64 {
    system_failure_from_view(&derive_deployment(plan, scenario), scenario)
}

/// Sum over consumer services of the mean distance over all
/// consumer-container / provider-container pairs.
pub fn network_distance(plan: &AllocationPlan, scenario: &Scenario) -> f64 {
    network_distance_from_view(&derive_deployment(plan, scenario), scenario)
}

/// Capacity constraint: every machine's load strictly below its capacity.
pub fn is_feasible(plan: &AllocationPlan, scenario: &Scenario) -> bool {
    feasible_from_view(&derive_deployment(plan, scenario), scenario)
}

/// Evaluates a plan, returning the deployment view alongside the fitness so
/// callers that need machine-usage statistics avoid a second derivation.
pub fn evaluate_with_view(plan: &AllocationPlan, scenario: &Scenario) -> (FitnessTuple, DeploymentView) {
    let view = derive_deployment(plan, scenario);
    if !feasible_from_view(&view, scenario) {
        return (FitnessTuple::infeasible(), view);
    }
    let fitness = FitnessTuple {
        threshold_distance: threshold_distance_from_plan(plan, scenario),
        cluster_balance: cluster_balance_from_view(&view, scenario),
        system_failure: system_failure_from_view(&view, scenario),
        network_distance: network_distance_from_view(&view, scenario),
        feasible: true,
    };
    (fitness, view)
}

/// The four objective values of a plan, or the infinity sentinel when the
/// capacity constraint is violated.
pub fn evaluate(plan: &AllocationPlan, scenario: &Scenario) -> FitnessTuple {
    evaluate_with_view(plan, scenario).0
}

/// Equal-weight average of the min-max normalized objectives. An objective
/// whose range is degenerate over the reference set contributes 0.
pub fn sov(
    fitness: &FitnessTuple,
    mins: [f64; OBJECTIVE_COUNT],
    maxs: [f64; OBJECTIVE_COUNT],
) -> Result<f64, ObjectiveError> {
    if !fitness.feasible {
        return Err(ObjectiveError::InfeasibleFitness);
    }
    debug_assert!(mins.iter().zip(maxs).all(|(lo, hi)| *lo <= hi));
    let values = fitness.values();
    let mut total = 0.0;
    for o in 0..OBJECTIVE_COUNT {
        let range = maxs[o] - mins[o];
        if range > 0.0 {
            total += 0.25 * (values[o] - mins[o]) / range;
        }
    }
    Ok(total)
}

/// Index of the tuple with the smallest SOV, normalizing per objective over
/// the feasible tuples of the set (ties by first occurrence). `None` when the
/// set contains no feasible tuple.
pub fn min_sov_index(tuples: &[FitnessTuple]) -> Option<usize> {
    let mut mins = [f64::INFINITY; OBJECTIVE_COUNT];
    let mut maxs = [f64::NEG_INFINITY; OBJECTIVE_COUNT];
    let mut any = false;
    for f in tuples.iter().filter(|f| f.feasible) {
        any = true;
        for (o, v) in f.values().iter().enumerate() {
            mins[o] = mins[o].min(*v);
            maxs[o] = maxs[o].max(*v);
        }
    }
    if !any {
        return None;
    }
    let mut best = None;
    let mut best_sov = f64::INFINITY;
    for (i, f) in tuples.iter().enumerate() {
        if !f.feasible {
            continue;
        }
        let s = sov(f, mins, maxs).expect("feasible tuple");
        if s < best_sov {
            best_sov = s;
            best = Some(i);
        }
    }
    best
}
