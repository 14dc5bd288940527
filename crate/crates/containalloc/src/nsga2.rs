//! The evolutionary engine: chromosome operators, fast non-dominated sorting,
//! crowding distance, binary tournament selection and the elitist
//! generational loop.
//!
//! One seeded generator drives the whole run sequentially, so a fixed seed
//! reproduces every generation bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{AllocationPlan, Scenario};
use crate::objectives::{self, FitnessTuple, OBJECTIVE_COUNT};

#[derive(Debug, Error)]
pub enum GaError {
    #[error("invalid GA parameters: {0}")]
    InvalidParams(String),
    #[error("selection over an empty population")]
    EmptyPopulation,
}

/// Execution parameters. Defaults follow the experiment configuration:
/// population 200, 300 generations, mutation probability 0.25, crossover
/// probability 1.0.
#[derive(Debug, Clone, PartialEq)]
pub struct GaParams {
    pub population_size: usize,
    pub generations: usize,
    pub mutation_prob: f64,
    pub crossover_prob: f64,
    /// Upper bound for the scale drawn per service when seeding the initial
    /// population.
    pub max_init_scale: usize,
    /// Hard cap on every service's scale. Growth mutation truncates its
    /// append at the cap. Without one, the failure and balance objectives
    /// reward ever finer replica granularity and the front drifts to
    /// thousands of containers per solution; the default keeps scale levels
    /// in the regime the experiments report. `None` disables the cap.
    pub max_scale: Option<usize>,
    pub seed: u64,
}

/// Default scale cap: four doublings above the default initial scale bound.
pub const DEFAULT_MAX_SCALE: usize = 40;

impl Default for GaParams {
    fn default() -> Self {
        Self {
            population_size: 200,
            generations: 300,
            mutation_prob: 0.25,
            crossover_prob: 1.0,
            max_init_scale: 10,
            max_scale: Some(DEFAULT_MAX_SCALE),
            seed: 0,
        }
    }
}

impl GaParams {
    pub fn validate(&self) -> Result<(), GaError> {
        if self.population_size < 2 || self.population_size % 2 != 0 {
            return Err(GaError::InvalidParams(format!(
                "population size must be even and >= 2, got {}",
                self.population_size
            )));
        }
        if self.generations < 1 {
            return Err(GaError::InvalidParams(
                "generations must be >= 1".to_string(),
            ));
        }
        if !(0.0..=1.0).contains(&self.mutation_prob) {
            return Err(GaError::InvalidParams(format!(
                "mutation probability must be in [0, 1], got {}",
                self.mutation_prob
            )));
        }
        if !(0.0..=1.0).contains(&self.crossover_prob) {
            return Err(GaError::InvalidParams(format!(
                "crossover probability must be in [0, 1], got {}",
                self.crossover_prob
            )));
        }
        if self.max_init_scale < 1 {
            return Err(GaError::InvalidParams(
                "max_init_scale must be >= 1".to_string(),
            ));
        }
        if let Some(cap) = self.max_scale {
            if cap < self.max_init_scale {
                return Err(GaError::InvalidParams(format!(
                    "max_scale {cap} is below max_init_scale {}",
                    self.max_init_scale
                )));
            }
        }
        Ok(())
    }
}

/// A solution with its cached fitness and front-sorting annotations.
#[derive(Debug, Clone)]
pub struct Individual {
    pub plan: AllocationPlan,
    pub fitness: FitnessTuple,
    /// Machines hosting at least one of the plan's containers.
    pub used_machines: usize,
    /// Front level, 0 = Pareto-optimal front.
    pub rank: usize,
    pub crowding: f64,
}

impl Individual {
    pub fn from_plan(plan: AllocationPlan, scenario: &Scenario) -> Self {
        let (fitness, view) = objectives::evaluate_with_view(&plan, scenario);
        Self {
            plan,
            fitness,
            used_machines: view.used_machines.len(),
            rank: usize::MAX,
            crowding: 0.0,
        }
    }
}

/// Per-generation statistics over the rank-0 front.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub generation: usize,
    pub objective_min: [f64; OBJECTIVE_COUNT],
    pub objective_mean: [f64; OBJECTIVE_COUNT],
    /// Objective values of the front's minimum-SOV solution.
    pub objective_min_sov: [f64; OBJECTIVE_COUNT],
    pub used_machines_min: usize,
    pub used_machines_mean: f64,
    pub containers_min: usize,
    pub containers_mean: f64,
    pub front_size: usize,
}

/// One record per generation, including the initial population as
/// generation 0.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GenerationTrace {
    pub records: Vec<TraceRecord>,
}

/// Fitness tuples of the rank-0 front at a sampled generation.
#[derive(Debug, Clone)]
pub struct FrontSnapshot {
    pub generation: usize,
    pub fitness: Vec<FitnessTuple>,
}

/// Result of a GA run: the final Pareto front, the full trace, and any
/// requested front snapshots.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub front: Vec<Individual>,
    pub trace: GenerationTrace,
    pub snapshots: Vec<FrontSnapshot>,
}

/// Draws a random plan: per service a scale uniform in [1, max_init_scale],
/// each replica on a uniformly chosen machine.
pub fn random_plan<R: Rng>(scenario: &Scenario, max_init_scale: usize, rng: &mut R) -> AllocationPlan {
    let machines = scenario.machine_count();
    let alloc = (0..scenario.service_count())
        .map(|_| {
            let scale = rng.random_range(1..=max_init_scale);
            (0..scale).map(|_| rng.random_range(0..machines)).collect()
        })
        .collect();
    AllocationPlan::new(alloc)
}

/// Single-point crossover of one allocation-list pair at cut `r` (1-based,
/// 1 <= r <= min(len_a, len_b)): the first child takes a's prefix [1..r] and
/// b's suffix [r+1..], the second the opposite pieces.
pub(crate) fn crossover_lists(a: &[usize], b: &[usize], r: usize) -> (Vec<usize>, Vec<usize>) {
    debug_assert!(r >= 1 && r <= a.len().min(b.len()));
    let mut c1 = Vec::with_capacity(b.len());
    c1.extend_from_slice(&a[..r]);
    c1.extend_from_slice(&b[r..]);
    let mut c2 = Vec::with_capacity(a.len());
    c2.extend_from_slice(&b[..r]);
    c2.extend_from_slice(&a[r..]);
    (c1, c2)
}

/// Applies the single-point crossover independently to every allocation
/// list, drawing a fresh cut point per list.
pub fn crossover<R: Rng>(
    parent1: &AllocationPlan,
    parent2: &AllocationPlan,
    rng: &mut R,
) -> (AllocationPlan, AllocationPlan) {
    debug_assert_eq!(parent1.alloc.len(), parent2.alloc.len());
    let mut child1 = Vec::with_capacity(parent1.alloc.len());
    let mut child2 = Vec::with_capacity(parent1.alloc.len());
    for (a, b) in parent1.alloc.iter().zip(&parent2.alloc) {
        let r = rng.random_range(1..=a.len().min(b.len()));
        let (c1, c2) = crossover_lists(a, b, r);
        child1.push(c1);
        child2.push(c2);
    }
    (AllocationPlan::new(child1), AllocationPlan::new(child2))
}

/// Shuffles the allocation lists across the microservices array.
pub fn mutate_swap<R: Rng>(plan: &mut AllocationPlan, rng: &mut R) {
    use rand::seq::SliceRandom;
    plan.alloc.shuffle(rng);
}

/// Removes k entries (k uniform in [1, len-1]) at random positions from
/// every allocation list; lists of length 1 are untouched.
pub fn mutate_shrink<R: Rng>(plan: &mut AllocationPlan, rng: &mut R) {
    for list in &mut plan.alloc {
        if list.len() < 2 {
            continue;
        }
        let k = rng.random_range(1..=list.len() - 1);
        for _ in 0..k {
            let pos = rng.random_range(0..list.len());
            list.remove(pos);
        }
    }
}

/// Appends k uniformly drawn machine ids (k uniform in [1, len]) to every
/// allocation list, truncating the append when a scale cap is set.
pub fn mutate_growth<R: Rng>(
    plan: &mut AllocationPlan,
    machine_count: usize,
    max_scale: Option<usize>,
    rng: &mut R,
) {
    for list in &mut plan.alloc {
        let mut k = rng.random_range(1..=list.len());
        if let Some(cap) = max_scale {
            k = k.min(cap.saturating_sub(list.len()));
        }
        for _ in 0..k {
            list.push(rng.random_range(0..machine_count));
        }
    }
}

/// Dominance between two fitness tuples (minimization).
pub fn dominates(f1: &FitnessTuple, f2: &FitnessTuple) -> bool {
    f1.dominates(f2)
}

/// Assigns ranks by iterative Pareto peeling: rank 0 is the non-dominated
/// set, rank n the non-dominated set once ranks < n are removed. Returns the
/// fronts as index lists.
pub fn fast_non_dominated_sort(population: &mut [Individual]) -> Vec<Vec<usize>> {
    let n = population.len();
    let mut dominated_by: Vec<Vec<u32>> = vec![Vec::new(); n];
    let mut domination_count = vec![0u32; n];

    for i in 0..n {
        for j in (i + 1)..n {
            if population[i].fitness.dominates(&population[j].fitness) {
                dominated_by[i].push(j as u32);
                domination_count[j] += 1;
            } else if population[j].fitness.dominates(&population[i].fitness) {
                dominated_by[j].push(i as u32);
                domination_count[i] += 1;
            }
        }
    }

    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| domination_count[i] == 0).collect();
    let mut rank = 0;
    while !current.is_empty() {
        for &i in &current {
            population[i].rank = rank;
        }
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominated_by[i] {
                let j = j as usize;
                domination_count[j] -= 1;
                if domination_count[j] == 0 {
                    next.push(j);
                }
            }
        }
        fronts.push(current);
        current = next;
        rank += 1;
    }
    fronts
}

/// Assigns crowding distances within one front: boundary solutions per
/// objective get infinity, interior ones accumulate the normalized gap to
/// their neighbors; degenerate objectives contribute nothing.
pub fn crowding_distance(population: &mut [Individual], front: &[usize]) {
    for &i in front {
        population[i].crowding = 0.0;
    }
    if front.len() <= 2 {
        for &i in front {
            population[i].crowding = f64::INFINITY;
        }
        return;
    }
    let mut order: Vec<usize> = front.to_vec();
    for o in 0..OBJECTIVE_COUNT {
        order.sort_by(|&a, &b| {
            population[a].fitness.values()[o]
                .partial_cmp(&population[b].fitness.values()[o])
                .expect("objective values are never NaN")
        });
        let first = order[0];
        let last = order[order.len() - 1];
        let min = population[first].fitness.values()[o];
        let max = population[last].fitness.values()[o];
        population[first].crowding = f64::INFINITY;
        population[last].crowding = f64::INFINITY;
        if !(max - min).is_finite() || max <= min {
            continue;
        }
        for w in order.windows(3) {
            let gap = population[w[2]].fitness.values()[o] - population[w[0]].fitness.values()[o];
            population[w[1]].crowding += gap / (max - min);
        }
    }
}

/// Ranks, assigns crowding and stably sorts the population by ascending rank
/// then descending crowding; equal individuals keep their insertion order.
pub fn rank_and_sort(population: &mut [Individual]) {
    let fronts = fast_non_dominated_sort(population);
    for front in &fronts {
        crowding_distance(population, front);
    }
    population.sort_by(|a, b| {
        a.rank.cmp(&b.rank).then_with(|| {
            b.crowding
                .partial_cmp(&a.crowding)
                .expect("crowding is never NaN")
        })
    });
}

fn tournament_index<R: Rng>(len: usize, rng: &mut R) -> usize {
    let a = rng.random_range(0..len);
    let b = rng.random_range(0..len);
    a.min(b)
}

/// Binary tournament over a population sorted by (rank, -crowding): two
/// positions are drawn with replacement and the earlier one wins.
pub fn binary_tournament<'a, R: Rng>(
    sorted: &'a [Individual],
    rng: &mut R,
) -> Result<&'a Individual, GaError> {
    if sorted.is_empty() {
        return Err(GaError::EmptyPopulation);
    }
    Ok(&sorted[tournament_index(sorted.len(), rng)])
}

fn maybe_mutate<R: Rng>(
    plan: &mut AllocationPlan,
    scenario: &Scenario,
    params: &GaParams,
    rng: &mut R,
) {
    if rng.random::<f64>() >= params.mutation_prob {
        return;
    }
    match rng.random_range(0..3) {
        0 => mutate_swap(plan, rng),
        1 => mutate_shrink(plan, rng),
        _ => mutate_growth(plan, scenario.machine_count(), params.max_scale, rng),
    }
}

/// Keeps the best `n` of the combined pool: rank first, crowding second,
/// insertion order last.
pub(crate) fn environmental_selection(mut pool: Vec<Individual>, n: usize) -> Vec<Individual> {
    rank_and_sort(&mut pool);
    pool.truncate(n);
    pool
}

/// Statistics of the rank-0 prefix of a sorted population.
fn front_stats(sorted: &[Individual], generation: usize) -> TraceRecord {
    let front: Vec<&Individual> = sorted.iter().take_while(|ind| ind.rank == 0).collect();
    debug_assert!(!front.is_empty());
    let n = front.len() as f64;

    let mut objective_min = [f64::INFINITY; OBJECTIVE_COUNT];
    let mut objective_mean = [0.0; OBJECTIVE_COUNT];
    for ind in &front {
        for (o, v) in ind.fitness.values().iter().enumerate() {
            objective_min[o] = objective_min[o].min(*v);
            objective_mean[o] += *v / n;
        }
    }

    let tuples: Vec<FitnessTuple> = front.iter().map(|ind| ind.fitness).collect();
    let objective_min_sov = match objectives::min_sov_index(&tuples) {
        Some(i) => front[i].fitness.values(),
        // Only reachable when no feasible plan exists in the population.
        None => [f64::INFINITY; OBJECTIVE_COUNT],
    };

    let used: Vec<usize> = front.iter().map(|ind| ind.used_machines).collect();
    let containers: Vec<usize> = front.iter().map(|ind| ind.plan.total_containers()).collect();

    TraceRecord {
        generation,
        objective_min,
        objective_mean,
        objective_min_sov,
        used_machines_min: used.iter().copied().min().unwrap_or(0),
        used_machines_mean: used.iter().sum::<usize>() as f64 / n,
        containers_min: containers.iter().copied().min().unwrap_or(0),
        containers_mean: containers.iter().sum::<usize>() as f64 / n,
        front_size: front.len(),
    }
}

/// One elitist generation: breeds `population_size` children through
/// tournament selection, crossover and mutation, joins them with the parents
/// and keeps the best half of the doubled pool.
pub fn evolve_generation<R: Rng>(
    population: Vec<Individual>,
    scenario: &Scenario,
    params: &GaParams,
    rng: &mut R,
    generation: usize,
) -> (Vec<Individual>, TraceRecord) {
    debug_assert_eq!(population.len(), params.population_size);
    let mut children = Vec::with_capacity(params.population_size);
    for _ in 0..params.population_size / 2 {
        let a = tournament_index(population.len(), rng);
        let b = tournament_index(population.len(), rng);
        let (mut c1, mut c2) = if rng.random::<f64>() < params.crossover_prob {
            crossover(&population[a].plan, &population[b].plan, rng)
        } else {
            (population[a].plan.clone(), population[b].plan.clone())
        };
        maybe_mutate(&mut c1, scenario, params, rng);
        maybe_mutate(&mut c2, scenario, params, rng);
        children.push(c1);
        children.push(c2);
    }

    // Children are evaluated here (pure, order-independent); joined with the
    // parents this doubles the pool before selection.
    let mut pool: Vec<Individual> = children
        .into_iter()
        .map(|plan| Individual::from_plan(plan, scenario))
        .collect();
    pool.extend(population);

    let next = environmental_selection(pool, params.population_size);
    let record = front_stats(&next, generation);
    (next, record)
}

/// Runs the full optimization, capturing front snapshots at the requested
/// generations.
pub fn run_with_snapshots(
    scenario: &Scenario,
    params: &GaParams,
    snapshot_generations: &[usize],
) -> Result<RunOutcome, GaError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let mut population: Vec<Individual> = (0..params.population_size)
        .map(|_| Individual::from_plan(random_plan(scenario, params.max_init_scale, &mut rng), scenario))
        .collect();
    rank_and_sort(&mut population);

    let mut trace = GenerationTrace::default();
    let mut snapshots = Vec::new();
    let snapshot = |population: &[Individual], generation: usize, out: &mut Vec<FrontSnapshot>| {
        if snapshot_generations.contains(&generation) {
            out.push(FrontSnapshot {
                generation,
                fitness: population
                    .iter()
                    .take_while(|ind| ind.rank == 0)
                    .map(|ind| ind.fitness)
                    .collect(),
            });
        }
    };

    trace.records.push(front_stats(&population, 0));
    snapshot(&population, 0, &mut snapshots);

    for generation in 1..=params.generations {
        let (next, record) = evolve_generation(population, scenario, params, &mut rng, generation);
        population = next;
        trace.records.push(record);
        snapshot(&population, generation, &mut snapshots);
    }

    let front = population
        .iter()
        .take_while(|ind| ind.rank == 0)
        .cloned()
        .collect();
    Ok(RunOutcome {
        front,
        trace,
        snapshots,
    })
}

/// Runs the optimization and returns the final Pareto front with the
/// per-generation trace.
pub fn run(scenario: &Scenario, params: &GaParams) -> Result<(Vec<Individual>, GenerationTrace), GaError> {
    let outcome = run_with_snapshots(scenario, params, &[])?;
    Ok((outcome.front, outcome.trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_two_rack_topology, ApplicationSpec, MicroserviceSpec};
    use proptest::prelude::*;

    fn test_scenario(services: usize, machines: usize) -> Scenario {
        let microservices = (0..services)
            .map(|i| MicroserviceSpec {
                name: format!("svc{i}"),
                providers: if i > 0 { vec![i - 1] } else { vec![] },
                msreq: 1.0 + i as f64,
                res: 0.5,
                thr: 2.0,
                fail: 0.01,
            })
            .collect();
        let topology =
            build_two_rack_topology(machines, &[400.0, 800.0], 0.025, 1.0, 4.0).unwrap();
        Scenario::new(
            vec![ApplicationSpec {
                ureq: 1.0,
                microservices,
            }],
            topology,
        )
        .unwrap()
    }

    fn tuple(v: [f64; 4]) -> FitnessTuple {
        FitnessTuple {
            threshold_distance: v[0],
            cluster_balance: v[1],
            system_failure: v[2],
            network_distance: v[3],
            feasible: true,
        }
    }

    fn individual(v: [f64; 4]) -> Individual {
        Individual {
            plan: AllocationPlan::new(vec![vec![0]]),
            fitness: tuple(v),
            used_machines: 1,
            rank: usize::MAX,
            crowding: 0.0,
        }
    }

    #[test]
    fn random_plan_respects_bounds() {
        let scenario = test_scenario(14, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let plan = random_plan(&scenario, 10, &mut rng);
            assert_eq!(plan.alloc.len(), 14);
            assert!(plan.alloc.iter().all(|l| (1..=10).contains(&l.len())));
            assert!(plan.validate(&scenario).is_ok());
        }
        // Degenerate bound: every service gets exactly one replica.
        let plan = random_plan(&scenario, 1, &mut rng);
        assert!(plan.alloc.iter().all(|l| l.len() == 1));
    }

    #[test]
    fn random_plan_is_deterministic() {
        let scenario = test_scenario(5, 6);
        let a = random_plan(&scenario, 8, &mut ChaCha8Rng::seed_from_u64(7));
        let b = random_plan(&scenario, 8, &mut ChaCha8Rng::seed_from_u64(7));
        assert_eq!(a, b);
    }

    #[test]
    fn crossover_lists_hand_trace() {
        // [A,B,C] x [D,E] at r=1 -> [A,E] and [D,B,C].
        let (c1, c2) = crossover_lists(&[10, 11, 12], &[20, 21], 1);
        assert_eq!(c1, vec![10, 21]);
        assert_eq!(c2, vec![20, 11, 12]);
    }

    #[test]
    fn crossover_identical_parents_is_identity() {
        let scenario = test_scenario(4, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let parent = random_plan(&scenario, 5, &mut rng);
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (c1, c2) = crossover(&parent, &parent, &mut rng);
            assert_eq!(c1, parent);
            assert_eq!(c2, parent);
        }
    }

    #[test]
    fn mutate_swap_preserves_multiset_and_singleton() {
        let mut single = AllocationPlan::new(vec![vec![1, 2]]);
        mutate_swap(&mut single, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(single.alloc, vec![vec![1, 2]]);

        let mut plan = AllocationPlan::new(vec![vec![0], vec![1, 1], vec![2, 3]]);
        let mut before = plan.alloc.clone();
        mutate_swap(&mut plan, &mut ChaCha8Rng::seed_from_u64(5));
        let mut after = plan.alloc.clone();
        before.sort();
        after.sort();
        assert_eq!(before, after);
    }

    #[test]
    fn mutate_shrink_bounds() {
        let mut floored = AllocationPlan::new(vec![vec![0], vec![1]]);
        mutate_shrink(&mut floored, &mut ChaCha8Rng::seed_from_u64(2));
        assert_eq!(floored.alloc, vec![vec![0], vec![1]]);

        for seed in 0..200 {
            let mut plan = AllocationPlan::new(vec![vec![0, 1, 2, 3, 4]]);
            let original = plan.alloc[0].clone();
            mutate_shrink(&mut plan, &mut ChaCha8Rng::seed_from_u64(seed));
            let len = plan.alloc[0].len();
            assert!((1..=4).contains(&len), "seed {seed}: len {len}");
            // Survivors are a sub-multiset of the original list.
            let mut remaining = original;
            for &m in &plan.alloc[0] {
                let pos = remaining.iter().position(|&x| x == m).unwrap();
                remaining.remove(pos);
            }
        }
    }

    #[test]
    fn mutate_growth_bounds() {
        for seed in 0..200 {
            let mut plan = AllocationPlan::new(vec![vec![0, 1, 2]]);
            mutate_growth(&mut plan, 6, None, &mut ChaCha8Rng::seed_from_u64(seed));
            let len = plan.alloc[0].len();
            assert!((4..=6).contains(&len), "seed {seed}: len {len}");
            assert_eq!(&plan.alloc[0][..3], &[0, 1, 2]);
            assert!(plan.alloc[0].iter().all(|&m| m < 6));
        }
    }

    #[test]
    fn mutate_growth_respects_cap() {
        for seed in 0..100 {
            let mut plan = AllocationPlan::new(vec![vec![0, 1], vec![2]]);
            mutate_growth(&mut plan, 4, Some(2), &mut ChaCha8Rng::seed_from_u64(seed));
            assert!(plan.alloc.iter().all(|l| l.len() <= 2));
        }
    }

    #[test]
    fn sort_single_front() {
        let mut pop = vec![
            individual([1.0, 2.0, 3.0, 4.0]),
            individual([4.0, 3.0, 2.0, 1.0]),
            individual([2.0, 1.0, 4.0, 3.0]),
        ];
        let fronts = fast_non_dominated_sort(&mut pop);
        assert_eq!(fronts.len(), 1);
        assert!(pop.iter().all(|ind| ind.rank == 0));
    }

    #[test]
    fn sort_totally_ordered_chain() {
        let mut pop: Vec<Individual> = (0..5)
            .map(|i| individual([i as f64 + 1.0; 4]))
            .collect();
        let fronts = fast_non_dominated_sort(&mut pop);
        assert_eq!(fronts.len(), 5);
        for (rank, ind) in pop.iter().enumerate() {
            assert_eq!(ind.rank, rank);
        }
    }

    /// O(n^2) peeling oracle, independent of the engine's bookkeeping.
    fn oracle_ranks(tuples: &[FitnessTuple]) -> Vec<usize> {
        let mut rank = vec![usize::MAX; tuples.len()];
        let mut assigned = 0;
        let mut level = 0;
        while assigned < tuples.len() {
            let front: Vec<usize> = (0..tuples.len())
                .filter(|&i| rank[i] == usize::MAX)
                .filter(|&i| {
                    !(0..tuples.len()).any(|j| {
                        rank[j] == usize::MAX && j != i && tuples[j].dominates(&tuples[i])
                    })
                })
                .collect();
            for &i in &front {
                rank[i] = level;
            }
            assigned += front.len();
            level += 1;
        }
        rank
    }

    #[test]
    fn sort_matches_pairwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let mut pop: Vec<Individual> = (0..50)
                .map(|_| {
                    // Small value set to force ties and duplicates.
                    individual([
                        rng.random_range(0..4) as f64,
                        rng.random_range(0..4) as f64,
                        rng.random_range(0..4) as f64,
                        rng.random_range(0..4) as f64,
                    ])
                })
                .collect();
            let expected = oracle_ranks(&pop.iter().map(|i| i.fitness).collect::<Vec<_>>());
            fast_non_dominated_sort(&mut pop);
            let got: Vec<usize> = pop.iter().map(|i| i.rank).collect();
            assert_eq!(got, expected);
        }
    }

    #[test]
    fn crowding_small_front_all_infinite() {
        let mut pop = vec![individual([1.0; 4]), individual([2.0; 4])];
        let front = vec![0, 1];
        crowding_distance(&mut pop, &front);
        assert!(pop.iter().all(|ind| ind.crowding.is_infinite()));
    }

    #[test]
    fn crowding_interior_value() {
        // One varying objective with values {0, 5, 10}: middle gets 1.0.
        let mut pop = vec![
            individual([0.0, 7.0, 7.0, 7.0]),
            individual([5.0, 7.0, 7.0, 7.0]),
            individual([10.0, 7.0, 7.0, 7.0]),
        ];
        let front = vec![0, 1, 2];
        crowding_distance(&mut pop, &front);
        assert!((pop[1].crowding - 1.0).abs() < 1e-12);
        assert!(pop[0].crowding.is_infinite());
        assert!(pop[2].crowding.is_infinite());
    }

    #[test]
    fn crowding_duplicates_get_zero() {
        let mut pop = vec![
            individual([1.0; 4]),
            individual([1.0; 4]),
            individual([1.0; 4]),
        ];
        let front = vec![0, 1, 2];
        crowding_distance(&mut pop, &front);
        assert_eq!(pop[1].crowding, 0.0);
    }

    #[test]
    fn tournament_singleton_and_empty() {
        let pop = vec![individual([1.0; 4])];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..10 {
            let winner = binary_tournament(&pop, &mut rng).unwrap();
            assert_eq!(winner.fitness, pop[0].fitness);
        }
        assert!(binary_tournament(&[], &mut rng).is_err());
    }

    #[test]
    fn tournament_prefers_earlier_positions() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let len = 20;
        let mut hits = vec![0usize; len];
        for _ in 0..200_000 {
            hits[tournament_index(len, &mut rng)] += 1;
        }
        // Selection probability is strictly decreasing in the sorted index;
        // with 200k draws the expected gap (2(len-i)-1)/len^2 dwarfs noise.
        for w in hits.windows(2) {
            assert!(w[0] > w[1], "hits not decreasing: {hits:?}");
        }
    }

    #[test]
    fn environmental_selection_keeps_parents_over_infeasible_children() {
        let parents: Vec<Individual> = (0..4)
            .map(|i| individual([i as f64 + 1.0, 1.0, 1.0, 1.0]))
            .collect();
        let children: Vec<Individual> = (0..4)
            .map(|_| Individual {
                fitness: FitnessTuple::infeasible(),
                ..individual([0.0; 4])
            })
            .collect();
        let mut pool = children;
        pool.extend(parents.clone());
        let next = environmental_selection(pool, 4);
        assert!(next.iter().all(|ind| ind.fitness.feasible));
        let mut kept: Vec<f64> = next.iter().map(|i| i.fitness.threshold_distance).collect();
        kept.sort_by(f64::total_cmp);
        assert_eq!(kept, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn evolve_is_deterministic() {
        let scenario = test_scenario(5, 8);
        let params = GaParams {
            population_size: 20,
            generations: 10,
            seed: 42,
            max_init_scale: 4,
            ..GaParams::default()
        };
        let (front_a, trace_a) = run(&scenario, &params).unwrap();
        let (front_b, trace_b) = run(&scenario, &params).unwrap();
        assert_eq!(trace_a, trace_b);
        assert_eq!(front_a.len(), front_b.len());
        for (a, b) in front_a.iter().zip(&front_b) {
            assert_eq!(a.plan, b.plan);
            assert_eq!(a.fitness, b.fitness);
        }
    }

    #[test]
    fn minimal_run_shape() {
        let scenario = test_scenario(2, 3);
        let params = GaParams {
            population_size: 2,
            generations: 1,
            max_init_scale: 2,
            seed: 0,
            ..GaParams::default()
        };
        let (front, trace) = run(&scenario, &params).unwrap();
        assert!(!front.is_empty() && front.len() <= 2);
        assert_eq!(trace.records.len(), 2);
    }

    #[test]
    fn run_rejects_bad_params() {
        let scenario = test_scenario(2, 3);
        let odd = GaParams {
            population_size: 3,
            ..GaParams::default()
        };
        assert!(run(&scenario, &odd).is_err());
        let no_generations = GaParams {
            generations: 0,
            ..GaParams::default()
        };
        assert!(run(&scenario, &no_generations).is_err());
    }

    #[test]
    fn operators_preserve_plan_invariants_and_elitism_is_monotone() {
        let scenario = test_scenario(6, 8);
        let params = GaParams {
            population_size: 16,
            generations: 30,
            max_init_scale: 5,
            seed: 11,
            ..GaParams::default()
        };
        let (_, trace) = run(&scenario, &params).unwrap();
        for o in 0..OBJECTIVE_COUNT {
            for w in trace.records.windows(2) {
                assert!(
                    w[1].objective_min[o] <= w[0].objective_min[o],
                    "objective {o} min increased between generations {} and {}",
                    w[0].generation,
                    w[1].generation
                );
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn crossover_conserves_per_service_multisets(
            seed in 0u64..10_000,
            len_a in 1usize..6,
            len_b in 1usize..6,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a: Vec<usize> = (0..len_a).map(|_| rng.random_range(0..8)).collect();
            let b: Vec<usize> = (0..len_b).map(|_| rng.random_range(0..8)).collect();
            let p1 = AllocationPlan::new(vec![a.clone()]);
            let p2 = AllocationPlan::new(vec![b.clone()]);
            let (c1, c2) = crossover(&p1, &p2, &mut rng);
            prop_assert_eq!(c1.alloc[0].len() + c2.alloc[0].len(), len_a + len_b);
            let mut before: Vec<usize> = a.into_iter().chain(b).collect();
            let mut after: Vec<usize> =
                c1.alloc[0].iter().chain(c2.alloc[0].iter()).copied().collect();
            before.sort_unstable();
            after.sort_unstable();
            prop_assert_eq!(before, after);
        }

        #[test]
        fn operators_never_violate_plan_invariants(seed in 0u64..2_000) {
            let scenario = test_scenario(4, 6);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut plan = random_plan(&scenario, 5, &mut rng);
            for _ in 0..5 {
                match rng.random_range(0..4) {
                    0 => mutate_swap(&mut plan, &mut rng),
                    1 => mutate_shrink(&mut plan, &mut rng),
                    2 => mutate_growth(&mut plan, 6, None, &mut rng),
                    _ => {
                        let other = random_plan(&scenario, 5, &mut rng);
                        let (c1, _) = crossover(&plan, &other, &mut rng);
                        plan = c1;
                    }
                }
                prop_assert!(plan.validate(&scenario).is_ok());
            }
        }
    }
}
