//! Reference scheduler modeling the Kubernetes placement policies: a capacity
//! filter (a container only fits where the machine stays strictly below its
//! capacity) and a least-requested score (place on the machine with the
//! lowest resulting fractional usage). Scale levels are an input; the policy
//! itself cannot manage them.

use thiserror::Error;

use crate::model::{AllocationPlan, Scenario};

#[derive(Debug, Error, PartialEq)]
pub enum ScheduleError {
    #[error("scale vector has {got} entries, scenario has {expected} services")]
    ScaleLengthMismatch { got: usize, expected: usize },
    #[error("service {service} has scale 0, every service needs at least one replica")]
    ZeroScale { service: usize },
    #[error("no machine can fit replica {replica} of service {service} (load {load})")]
    NoFeasibleMachine {
        service: usize,
        replica: usize,
        load: f64,
    },
}

/// Per-service replica counts, all >= 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScaleVector {
    counts: Vec<usize>,
}

impl ScaleVector {
    pub fn new(counts: Vec<usize>) -> Result<Self, ScheduleError> {
        if let Some(service) = counts.iter().position(|&c| c == 0) {
            return Err(ScheduleError::ZeroScale { service });
        }
        Ok(Self { counts })
    }

    /// The scale levels a plan realizes.
    pub fn from_plan(plan: &AllocationPlan) -> Self {
        Self {
            counts: plan.alloc.iter().map(|list| list.len()).collect(),
        }
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// Places containers one at a time, services in global-index order with each
/// service's replicas placed consecutively. Candidates are machines that stay
/// strictly under capacity after the placement; among them the lowest
/// resulting usage wins, ties going to the lowest machine id.
pub fn schedule_least_requested(
    scenario: &Scenario,
    scales: &ScaleVector,
) -> Result<AllocationPlan, ScheduleError> {
    if scales.len() != scenario.service_count() {
        return Err(ScheduleError::ScaleLengthMismatch {
            got: scales.len(),
            expected: scenario.service_count(),
        });
    }
    let machines = scenario.topology().machines();
    let mut loads = vec![0.0; machines.len()];
    let mut alloc = Vec::with_capacity(scales.len());

    for (service, &scale) in scales.as_slice().iter().enumerate() {
        let load = scenario.services()[service].total_load / scale as f64;
        let mut list = Vec::with_capacity(scale);
        for replica in 0..scale {
            let mut best: Option<(usize, f64)> = None;
            for (m, machine) in machines.iter().enumerate() {
                let new_load = loads[m] + load;
                if new_load >= machine.cap {
                    continue;
                }
                let usage = new_load / machine.cap;
                if best.is_none_or(|(_, best_usage)| usage < best_usage) {
                    best = Some((m, usage));
                }
            }
            let Some((m, _)) = best else {
                return Err(ScheduleError::NoFeasibleMachine {
                    service,
                    replica,
                    load,
                });
            };
            loads[m] += load;
            list.push(m);
        }
        alloc.push(list);
    }
    Ok(AllocationPlan::new(alloc))
}
