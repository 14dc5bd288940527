//! System model: applications, microservices, machines, network topology and
//! the allocation chromosome they are optimized over.
//!
//! Indices double as identifiers throughout: a microservice is addressed by
//! its position in the application stack, a machine by its position in the
//! cluster, and a "global" service id is the position in the flattened list
//! of all (application, microservice) pairs in declaration order.

use thiserror::Error;

/// Errors raised while constructing or validating model values.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("microservice `{name}`: {problem}")]
    InvalidMicroservice { name: String, problem: String },
    #[error("application {app}: {problem}")]
    InvalidApplication { app: usize, problem: String },
    #[error("machine {machine}: {problem}")]
    InvalidMachine { machine: usize, problem: String },
    #[error("topology: {0}")]
    InvalidTopology(String),
    #[error("scenario: {0}")]
    InvalidScenario(String),
    #[error("allocation plan: {0}")]
    InvalidPlan(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// One microservice of an application stack.
///
/// `providers` holds local indices (within the same application) of the
/// services this one consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct MicroserviceSpec {
    pub name: String,
    pub providers: Vec<usize>,
    /// Requests issued per application user request.
    pub msreq: f64,
    /// Resource units consumed per request.
    pub res: f64,
    /// Resource threshold for normal operation.
    pub thr: f64,
    /// Failure rate in [0, 1].
    pub fail: f64,
}

impl MicroserviceSpec {
    fn validate(&self, own_index: usize, stack_len: usize) -> Result<(), ModelError> {
        let err = |problem: String| ModelError::InvalidMicroservice {
            name: self.name.clone(),
            problem,
        };
        if !(self.msreq >= 0.0) {
            return Err(err(format!("msreq must be >= 0, got {}", self.msreq)));
        }
        if !(self.res >= 0.0) {
            return Err(err(format!("res must be >= 0, got {}", self.res)));
        }
        if !(self.thr > 0.0) {
            return Err(err(format!("thr must be > 0, got {}", self.thr)));
        }
        if !(0.0..=1.0).contains(&self.fail) {
            return Err(err(format!("fail must be in [0, 1], got {}", self.fail)));
        }
        for &p in &self.providers {
            if p == own_index {
                return Err(err("provider set contains a self-reference".to_string()));
            }
            if p >= stack_len {
                return Err(err(format!(
                    "provider index {p} is outside the application stack (len {stack_len})"
                )));
            }
        }
        Ok(())
    }
}

/// An application: a workload multiplier and its microservice stack.
#[derive(Debug, Clone, PartialEq)]
pub struct ApplicationSpec {
    /// User-request workload multiplier, > 0.
    pub ureq: f64,
    pub microservices: Vec<MicroserviceSpec>,
}

/// One physical machine of the cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct MachineSpec {
    /// Computational capacity in resource units, > 0.
    pub cap: f64,
    /// Failure rate in [0, 1].
    pub fail: f64,
    pub rack: usize,
}

/// The cluster: machines plus a symmetric machine-to-machine distance matrix
/// with a zero diagonal (co-located containers are at distance 0).
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterTopology {
    machines: Vec<MachineSpec>,
    /// Flattened |P| x |P| row-major distance matrix.
    dist: Vec<f64>,
}

impl ClusterTopology {
    pub fn new(machines: Vec<MachineSpec>, dist: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        let n = machines.len();
        for (l, m) in machines.iter().enumerate() {
            if !(m.cap > 0.0) {
                return Err(ModelError::InvalidMachine {
                    machine: l,
                    problem: format!("cap must be > 0, got {}", m.cap),
                });
            }
            if !(0.0..=1.0).contains(&m.fail) {
                return Err(ModelError::InvalidMachine {
                    machine: l,
                    problem: format!("fail must be in [0, 1], got {}", m.fail),
                });
            }
        }
        if dist.len() != n || dist.iter().any(|row| row.len() != n) {
            return Err(ModelError::InvalidTopology(format!(
                "distance matrix must be {n}x{n}"
            )));
        }
        let mut flat = Vec::with_capacity(n * n);
        for (l, row) in dist.iter().enumerate() {
            for (l2, &d) in row.iter().enumerate() {
                if !(d >= 0.0) {
                    return Err(ModelError::InvalidTopology(format!(
                        "dist[{l}][{l2}] must be >= 0, got {d}"
                    )));
                }
                if l == l2 && d != 0.0 {
                    return Err(ModelError::InvalidTopology(format!(
                        "dist[{l}][{l}] must be 0, got {d}"
                    )));
                }
                if dist[l2][l] != d {
                    return Err(ModelError::InvalidTopology(format!(
                        "distance matrix is not symmetric at [{l}][{l2}]"
                    )));
                }
                flat.push(d);
            }
        }
        Ok(Self {
            machines,
            dist: flat,
        })
    }

    pub fn machines(&self) -> &[MachineSpec] {
        &self.machines
    }

    pub fn machine_count(&self) -> usize {
        self.machines.len()
    }

    #[inline]
    pub fn distance(&self, l: usize, l2: usize) -> f64 {
        self.dist[l * self.machines.len() + l2]
    }

    /// Row of the distance matrix for machine `l`.
    #[inline]
    pub fn distance_row(&self, l: usize) -> &[f64] {
        let n = self.machines.len();
        &self.dist[l * n..(l + 1) * n]
    }
}

/// Flattened per-service view used by the objective functions: the owning
/// application's workload is already folded into `total_load`.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalService {
    /// Owning application index.
    pub app: usize,
    /// Index within the application stack.
    pub local: usize,
    /// Provider services as global indices.
    pub providers: Vec<usize>,
    /// ureq_j * msreq_i * res_i: the load of the service at scale 1.
    pub total_load: f64,
    pub thr: f64,
    pub fail: f64,
}

/// A fully validated problem instance: applications, cluster, and the
/// flattened global service index.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    applications: Vec<ApplicationSpec>,
    topology: ClusterTopology,
    services: Vec<GlobalService>,
}

impl Scenario {
    pub fn new(
        applications: Vec<ApplicationSpec>,
        topology: ClusterTopology,
    ) -> Result<Self, ModelError> {
        let mut services = Vec::new();
        let mut base = 0usize;
        for (j, app) in applications.iter().enumerate() {
            if !(app.ureq > 0.0) {
                return Err(ModelError::InvalidApplication {
                    app: j,
                    problem: format!("ureq must be > 0, got {}", app.ureq),
                });
            }
            let stack_len = app.microservices.len();
            for (i, ms) in app.microservices.iter().enumerate() {
                ms.validate(i, stack_len)?;
                services.push(GlobalService {
                    app: j,
                    local: i,
                    providers: ms.providers.iter().map(|&p| base + p).collect(),
                    total_load: app.ureq * ms.msreq * ms.res,
                    thr: ms.thr,
                    fail: ms.fail,
                });
            }
            base += stack_len;
        }
        if !services.is_empty() && topology.machine_count() == 0 {
            return Err(ModelError::InvalidScenario(
                "a scenario with microservices needs at least one machine".to_string(),
            ));
        }
        Ok(Self {
            applications,
            topology,
            services,
        })
    }

    pub fn applications(&self) -> &[ApplicationSpec] {
        &self.applications
    }

    pub fn topology(&self) -> &ClusterTopology {
        &self.topology
    }

    /// All services across applications, in global-index order.
    pub fn services(&self) -> &[GlobalService] {
        &self.services
    }

    pub fn service_count(&self) -> usize {
        self.services.len()
    }

    pub fn machine_count(&self) -> usize {
        self.topology.machine_count()
    }
}

/// The chromosome: one allocation list of machine ids per global service.
/// The list length is the service's scale level; ids may repeat.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AllocationPlan {
    pub alloc: Vec<Vec<usize>>,
}

impl AllocationPlan {
    pub fn new(alloc: Vec<Vec<usize>>) -> Self {
        Self { alloc }
    }

    pub fn scale(&self, service: usize) -> usize {
        self.alloc[service].len()
    }

    pub fn total_containers(&self) -> usize {
        self.alloc.iter().map(|list| list.len()).sum()
    }

    pub fn validate(&self, scenario: &Scenario) -> Result<(), ModelError> {
        if self.alloc.len() != scenario.service_count() {
            return Err(ModelError::InvalidPlan(format!(
                "plan has {} allocation lists, scenario has {} services",
                self.alloc.len(),
                scenario.service_count()
            )));
        }
        let machines = scenario.machine_count();
        for (i, list) in self.alloc.iter().enumerate() {
            if list.is_empty() {
                return Err(ModelError::InvalidPlan(format!(
                    "service {i} has an empty allocation list (scale must be >= 1)"
                )));
            }
            if let Some(&bad) = list.iter().find(|&&m| m >= machines) {
                return Err(ModelError::InvalidPlan(format!(
                    "service {i} references machine {bad}, cluster has {machines}"
                )));
            }
        }
        Ok(())
    }
}

/// Per-machine view of a plan: loads, replica counts and the used-machine set.
#[derive(Debug, Clone, PartialEq)]
pub struct DeploymentView {
    /// Total allocated resource units per machine.
    pub per_machine_load: Vec<f64>,
    /// For each service, its (machine, replica count) pairs sorted by machine.
    pub replica_counts: Vec<Vec<(usize, u32)>>,
    /// Machines hosting at least one container, ascending.
    pub used_machines: Vec<usize>,
}

/// Resource units one container of `service` consumes at the given scale.
pub fn container_load(scenario: &Scenario, service: usize, scale: usize) -> Result<f64, ModelError> {
    let svc = scenario
        .services()
        .get(service)
        .ok_or_else(|| ModelError::InvalidArgument(format!("no service with index {service}")))?;
    if scale == 0 {
        return Err(ModelError::InvalidArgument(
            "scale must be >= 1".to_string(),
        ));
    }
    Ok(svc.total_load / scale as f64)
}

/// Materializes the machine-centric view of a plan.
pub fn derive_deployment(plan: &AllocationPlan, scenario: &Scenario) -> DeploymentView {
    let machines = scenario.machine_count();
    let mut per_machine_load = vec![0.0; machines];
    let mut containers = vec![0u32; machines];
    let mut replica_counts = Vec::with_capacity(plan.alloc.len());

    for (i, list) in plan.alloc.iter().enumerate() {
        let load = scenario.services()[i].total_load / list.len() as f64;
        let mut sorted = list.clone();
        sorted.sort_unstable();
        let mut counts: Vec<(usize, u32)> = Vec::new();
        for &m in &sorted {
            match counts.last_mut() {
                Some((machine, count)) if *machine == m => *count += 1,
                _ => counts.push((m, 1)),
            }
        }
        for &(m, count) in &counts {
            per_machine_load[m] += count as f64 * load;
            containers[m] += count;
        }
        replica_counts.push(counts);
    }

    let used_machines = containers
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(m, _)| m)
        .collect();

    DeploymentView {
        per_machine_load,
        replica_counts,
        used_machines,
    }
}

/// Builds the experiment cluster: capacities cycle through `cap_cycle` by
/// machine index, machines split into two racks (first half rack 0, any odd
/// extra machine included), distance 0 on the diagonal, `intra_dist` within a
/// rack and `inter_dist` across racks.
pub fn build_two_rack_topology(
    machine_count: usize,
    cap_cycle: &[f64],
    fail_rate: f64,
    intra_dist: f64,
    inter_dist: f64,
) -> Result<ClusterTopology, ModelError> {
    if machine_count == 0 {
        return Err(ModelError::InvalidArgument(
            "machine_count must be > 0".to_string(),
        ));
    }
    if cap_cycle.is_empty() {
        return Err(ModelError::InvalidArgument(
            "cap_cycle must not be empty".to_string(),
        ));
    }
    if !(intra_dist > 0.0) || !(inter_dist > 0.0) {
        return Err(ModelError::InvalidArgument(format!(
            "rack distances must be > 0, got intra {intra_dist} / inter {inter_dist}"
        )));
    }
    let rack0 = machine_count.div_ceil(2);
    let machines: Vec<MachineSpec> = (0..machine_count)
        .map(|l| MachineSpec {
            cap: cap_cycle[l % cap_cycle.len()],
            fail: fail_rate,
            rack: usize::from(l >= rack0),
        })
        .collect();
    let dist = (0..machine_count)
        .map(|l| {
            (0..machine_count)
                .map(|l2| {
                    if l == l2 {
                        0.0
                    } else if machines[l].rack == machines[l2].rack {
                        intra_dist
                    } else {
                        inter_dist
                    }
                })
                .collect()
        })
        .collect();
    ClusterTopology::new(machines, dist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Single application whose services have the given (msreq, res, thr) rows.
    pub(crate) fn simple_scenario(ureq: f64, rows: &[(f64, f64, f64)], machines: usize) -> Scenario {
        let microservices = rows
            .iter()
            .enumerate()
            .map(|(i, &(msreq, res, thr))| MicroserviceSpec {
                name: format!("ms{i}"),
                providers: vec![],
                msreq,
                res,
                thr,
                fail: 0.0,
            })
            .collect();
        let topology =
            build_two_rack_topology(machines, &[100.0, 200.0, 400.0, 800.0], 0.025, 1.0, 4.0)
                .unwrap();
        Scenario::new(
            vec![ApplicationSpec {
                ureq,
                microservices,
            }],
            topology,
        )
        .unwrap()
    }

    #[test]
    fn container_load_front_end() {
        let scenario = simple_scenario(1.0, &[(15.1, 3.8, 50.0)], 4);
        let load = container_load(&scenario, 0, 1).unwrap();
        assert!((load - 57.38).abs() < 1e-9, "got {load}");
    }

    #[test]
    fn container_load_zero_res() {
        let scenario = simple_scenario(1.0, &[(15.1, 0.0, 50.0)], 4);
        for scale in 1..=5 {
            assert_eq!(container_load(&scenario, 0, scale).unwrap(), 0.0);
        }
    }

    #[test]
    fn container_load_worker() {
        let scenario = simple_scenario(2.0, &[(3.2, 0.1, 1.0)], 4);
        let load = container_load(&scenario, 0, 4).unwrap();
        assert!((load - 0.16).abs() < 1e-9, "got {load}");
    }

    #[test]
    fn container_load_rejects_bad_arguments() {
        let scenario = simple_scenario(1.0, &[(1.0, 1.0, 1.0)], 4);
        assert!(container_load(&scenario, 1, 1).is_err());
        assert!(container_load(&scenario, 0, 0).is_err());
    }

    #[test]
    fn derive_deployment_sums_loads() {
        // Loads 2 and 3 both on machine 0.
        let scenario = simple_scenario(1.0, &[(1.0, 2.0, 1.0), (1.0, 3.0, 1.0)], 4);
        let plan = AllocationPlan::new(vec![vec![0], vec![0]]);
        let view = derive_deployment(&plan, &scenario);
        assert!((view.per_machine_load[0] - 5.0).abs() < 1e-9);
        assert_eq!(view.used_machines, vec![0]);
    }

    #[test]
    fn derive_deployment_counts_replicas_on_same_machine() {
        let scenario = simple_scenario(1.0, &[(1.0, 6.0, 1.0)], 4);
        let plan = AllocationPlan::new(vec![vec![1, 1]]);
        let view = derive_deployment(&plan, &scenario);
        let per_container = container_load(&scenario, 0, 2).unwrap();
        assert!((view.per_machine_load[1] - 2.0 * per_container).abs() < 1e-9);
        assert_eq!(view.replica_counts[0], vec![(1, 2)]);
    }

    #[test]
    fn derive_deployment_empty_scenario() {
        let topology =
            build_two_rack_topology(2, &[100.0], 0.0, 1.0, 4.0).unwrap();
        let scenario = Scenario::new(vec![], topology).unwrap();
        let plan = AllocationPlan::new(vec![]);
        let view = derive_deployment(&plan, &scenario);
        assert!(view.per_machine_load.iter().all(|&l| l == 0.0));
        assert!(view.used_machines.is_empty());
    }

    #[test]
    fn two_rack_topology_experiment_shape() {
        let topo =
            build_two_rack_topology(4, &[100.0, 200.0, 400.0, 800.0], 0.025, 1.0, 4.0).unwrap();
        let caps: Vec<f64> = topo.machines().iter().map(|m| m.cap).collect();
        assert_eq!(caps, vec![100.0, 200.0, 400.0, 800.0]);
        let racks: Vec<usize> = topo.machines().iter().map(|m| m.rack).collect();
        assert_eq!(racks, vec![0, 0, 1, 1]);
        assert_eq!(topo.distance(0, 1), 1.0);
        assert_eq!(topo.distance(0, 2), 4.0);
        assert_eq!(topo.distance(2, 2), 0.0);
        assert!(topo.machines().iter().all(|m| m.fail == 0.025));
    }

    #[test]
    fn two_rack_topology_singleton() {
        let topo = build_two_rack_topology(1, &[100.0], 0.025, 1.0, 4.0).unwrap();
        assert_eq!(topo.machine_count(), 1);
        assert_eq!(topo.distance(0, 0), 0.0);
    }

    #[test]
    fn two_rack_topology_large_split() {
        let topo =
            build_two_rack_topology(300, &[100.0, 200.0, 400.0, 800.0], 0.025, 1.0, 4.0).unwrap();
        let rack0 = topo.machines().iter().filter(|m| m.rack == 0).count();
        assert_eq!(rack0, 150);
        // Caps cycle 75 full times.
        for class in 0..4 {
            let count = topo
                .machines()
                .iter()
                .filter(|m| m.cap == [100.0, 200.0, 400.0, 800.0][class])
                .count();
            assert_eq!(count, 75);
        }
    }

    #[test]
    fn two_rack_topology_rejects_nonpositive_distance() {
        assert!(build_two_rack_topology(4, &[100.0], 0.025, 0.0, 4.0).is_err());
        assert!(build_two_rack_topology(4, &[100.0], 0.025, 1.0, -1.0).is_err());
    }

    #[test]
    fn scenario_rejects_bad_specs() {
        let topology = build_two_rack_topology(2, &[100.0], 0.0, 1.0, 4.0).unwrap();
        let bad_fail = ApplicationSpec {
            ureq: 1.0,
            microservices: vec![MicroserviceSpec {
                name: "x".into(),
                providers: vec![],
                msreq: 1.0,
                res: 1.0,
                thr: 1.0,
                fail: -0.1,
            }],
        };
        assert!(Scenario::new(vec![bad_fail], topology.clone()).is_err());

        let self_ref = ApplicationSpec {
            ureq: 1.0,
            microservices: vec![MicroserviceSpec {
                name: "x".into(),
                providers: vec![0],
                msreq: 1.0,
                res: 1.0,
                thr: 1.0,
                fail: 0.0,
            }],
        };
        assert!(Scenario::new(vec![self_ref], topology.clone()).is_err());

        let bad_ureq = ApplicationSpec {
            ureq: 0.0,
            microservices: vec![],
        };
        assert!(Scenario::new(vec![bad_ureq], topology).is_err());
    }

    proptest! {
        #[test]
        fn container_load_decreases_with_scale(
            msreq in 0.1f64..50.0,
            res in 0.1f64..50.0,
            ureq in 0.5f64..2.0,
            scale in 1usize..20,
        ) {
            let scenario = simple_scenario(ureq, &[(msreq, res, 1.0)], 4);
            let a = container_load(&scenario, 0, scale).unwrap();
            let b = container_load(&scenario, 0, scale + 1).unwrap();
            prop_assert!(b < a);
            // load * scale is constant in scale
            prop_assert!((a * scale as f64 - b * (scale + 1) as f64).abs() < 1e-9);
        }

        #[test]
        fn total_load_is_placement_independent(
            seed in 0u64..500,
            scales in proptest::collection::vec(1usize..5, 2..4),
        ) {
            use rand::{Rng, SeedableRng};
            let rows: Vec<(f64, f64, f64)> =
                (0..scales.len()).map(|i| (1.0 + i as f64, 2.0, 1.0)).collect();
            let scenario = simple_scenario(1.0, &rows, 6);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let alloc: Vec<Vec<usize>> = scales
                .iter()
                .map(|&s| (0..s).map(|_| rng.random_range(0..6)).collect())
                .collect();
            let plan = AllocationPlan::new(alloc);
            let view = derive_deployment(&plan, &scenario);
            let total: f64 = view.per_machine_load.iter().sum();
            let expected: f64 = (0..scales.len())
                .map(|i| scales[i] as f64 * container_load(&scenario, i, scales[i]).unwrap())
                .sum();
            prop_assert!((total - expected).abs() < 1e-9);
        }

        #[test]
        fn topology_is_symmetric_with_zero_diagonal(
            machines in 1usize..40,
            intra in 0.5f64..3.0,
            inter in 3.0f64..8.0,
        ) {
            let topo = build_two_rack_topology(machines, &[100.0, 200.0], 0.025, intra, inter).unwrap();
            for l in 0..machines {
                prop_assert_eq!(topo.distance(l, l), 0.0);
                for l2 in 0..machines {
                    prop_assert_eq!(topo.distance(l, l2), topo.distance(l2, l));
                }
            }
        }
    }
}
