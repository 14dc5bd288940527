//! Container allocation and microservice scaling for a modeled cloud
//! cluster, optimized with an elitist non-dominated-sorting genetic
//! algorithm over four objectives (container workload fit, cluster balance,
//! system failure, network distance) and compared against a Kubernetes-style
//! spreading scheduler.

pub mod baseline;
pub mod cli;
pub mod harness;
pub mod model;
pub mod nsga2;
pub mod objectives;
pub mod scenario_file;
