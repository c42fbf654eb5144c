//! Online reassignment of interrupted training tasks.
//!
//! When a user leaves its region mid-task, the partially trained task goes to
//! an [`OnlineQueue`]. A multi-objective genetic algorithm then searches for a
//! plan that hands queued tasks to receivers that stay behind, trading off
//! transmission overhead (`f1`) against load imbalance across receivers
//! (`f2`). A receiver may only host a task whose capacity requirement it
//! meets, and the summed demand it hosts may not exceed its capacity.
//!
//! Genomes are real vectors in `[0, 1]^T`, one gene per queued task. A gene
//! picks a position in the roster sorted by capacity (descending); if that
//! receiver cannot take the task the decoder walks forward (cyclically) to the
//! next one that can.

mod io;
mod operators;
mod sorting;

use std::collections::{HashSet, VecDeque};
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{InstanceError, MigrationInstance};
pub use operators::{
    binary_tournament, draw_pair, pm_gene, polynomial_mutation, sbx, sbx_gene, tournament_indices,
    tournament_winner,
};
pub use sorting::{
    assign_rank_and_crowding, crowding_distance, dominates, environmental_selection, fast_nondominated_sort,
    sort_objectives, SelectionMode,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MigrationError {
    #[error("objective vectors differ in length ({left} vs {right})")]
    DimensionMismatch { left: usize, right: usize },
    #[error("individual {0} has not been evaluated")]
    Unevaluated(usize),
    #[error("population of {have} cannot fill {need} slots")]
    PopulationTooSmall { have: usize, need: usize },
    #[error("invalid GA parameters: {0}")]
    InvalidParams(String),
    #[error("invalid task {id}: {reason}")]
    InvalidTask { id: u64, reason: String },
    #[error("task {0} is already queued")]
    DuplicateTask(u64),
    #[error("receiver roster is empty")]
    EmptyRoster,
}

/// An interrupted training task waiting for a new host.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: u64,
    pub origin_user: u64,
    /// Minimum uplink capacity (bits/s/Hz) needed to host the task.
    pub required_capacity: f64,
    /// Bits still to be uploaded.
    pub data_size: f64,
    /// Fraction already completed, in `[0, 1)`.
    pub progress: f64,
}

impl Task {
    pub fn validate(&self) -> Result<(), MigrationError> {
        let reason = if !(self.required_capacity > 0.0) || !self.required_capacity.is_finite() {
            "required_capacity must be positive"
        } else if !(self.data_size > 0.0) || !self.data_size.is_finite() {
            "data_size must be positive"
        } else if !(0.0..1.0).contains(&self.progress) {
            "progress must lie in [0, 1)"
        } else {
            return Ok(());
        };
        Err(MigrationError::InvalidTask {
            id: self.id,
            reason: reason.into(),
        })
    }
}

/// FIFO buffer of interrupted tasks with unique ids.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OnlineQueue {
    tasks: VecDeque<Task>,
}

impl OnlineQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, task: Task) -> Result<(), MigrationError> {
        task.validate()?;
        if self.tasks.iter().any(|t| t.id == task.id) {
            return Err(MigrationError::DuplicateTask(task.id));
        }
        self.tasks.push_back(task);
        Ok(())
    }

    pub fn pop(&mut self) -> Option<Task> {
        self.tasks.pop_front()
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Task> {
        self.tasks.iter()
    }

    pub fn tasks(&self) -> &VecDeque<Task> {
        &self.tasks
    }

    /// Removes tasks matching `pred`, preserving the order of the rest.
    pub fn drain_where(&mut self, mut pred: impl FnMut(&Task) -> bool) -> Vec<Task> {
        let mut removed = Vec::new();
        let mut kept = VecDeque::with_capacity(self.tasks.len());
        for t in self.tasks.drain(..) {
            if pred(&t) {
                removed.push(t);
            } else {
                kept.push_back(t);
            }
        }
        self.tasks = kept;
        removed
    }
}

impl FromIterator<Task> for OnlineQueue {
    fn from_iter<I: IntoIterator<Item = Task>>(iter: I) -> Self {
        Self {
            tasks: iter.into_iter().collect(),
        }
    }
}

/// A user that can take over queued tasks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Receiver {
    pub id: u64,
    /// Uplink capacity in bits/s/Hz.
    pub capacity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub genome: Vec<f64>,
    pub objectives: Option<Vec<f64>>,
    /// Non-domination rank, 1 for the first front; 0 until sorted.
    pub rank: usize,
    pub crowding: f64,
}

impl Individual {
    pub fn new(genome: Vec<f64>) -> Self {
        Self {
            genome,
            objectives: None,
            rank: 0,
            crowding: 0.0,
        }
    }

    fn objective(&self, k: usize) -> f64 {
        self.objectives.as_ref().map_or(f64::INFINITY, |o| o[k])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub task: u64,
    pub receiver: Option<u64>,
}

/// Task-to-receiver mapping, in queue order, with its objective vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentPlan {
    pub assignments: Vec<Assignment>,
    pub objectives: Vec<f64>,
}

impl AssignmentPlan {
    pub fn assigned(&self) -> usize {
        self.assignments.iter().filter(|a| a.receiver.is_some()).count()
    }

    pub fn unassigned(&self) -> usize {
        self.assignments.len() - self.assigned()
    }

    pub fn receiver_of(&self, task: u64) -> Option<u64> {
        self.assignments.iter().find(|a| a.task == task).and_then(|a| a.receiver)
    }

    /// Checks both capacity gates against the roster.
    pub fn is_capacity_feasible(&self, queue: &OnlineQueue, receivers: &[Receiver]) -> bool {
        receivers.iter().all(|r| {
            let hosted: Vec<&Task> = self
                .assignments
                .iter()
                .filter(|a| a.receiver == Some(r.id))
                .filter_map(|a| queue.iter().find(|t| t.id == a.task))
                .collect();
            hosted.iter().all(|t| r.capacity >= t.required_capacity)
                && hosted.iter().map(|t| t.required_capacity).sum::<f64>() <= r.capacity
        })
    }
}

/// Receivers in decoding order plus the evaluation constants.
#[derive(Debug, Clone)]
pub struct Roster {
    receivers: Vec<Receiver>,
    penalty: f64,
}

impl Roster {
    pub fn new(queue: &OnlineQueue, receivers: &[Receiver]) -> Self {
        let mut sorted = receivers.to_vec();
        sorted.sort_by(|a, b| b.capacity.total_cmp(&a.capacity).then(a.id.cmp(&b.id)));
        Self {
            penalty: unassigned_penalty(queue, receivers),
            receivers: sorted,
        }
    }

    pub fn receivers(&self) -> &[Receiver] {
        &self.receivers
    }

    pub fn penalty(&self) -> f64 {
        self.penalty
    }
}

/// Ten times the longest transmission time any feasible host could need.
pub fn unassigned_penalty(queue: &OnlineQueue, receivers: &[Receiver]) -> f64 {
    let max_size = queue.iter().map(|t| t.data_size).fold(0.0, f64::max);
    let min_req = queue.iter().map(|t| t.required_capacity).fold(f64::INFINITY, f64::min);
    let slowest_host = receivers
        .iter()
        .map(|r| r.capacity)
        .filter(|&c| c >= min_req && c > 0.0)
        .fold(f64::INFINITY, f64::min);
    let q = if slowest_host.is_finite() { slowest_host } else { 1.0 };
    10.0 * max_size / q
}

/// Decodes a genome into a plan and its `(f1, f2)` objectives.
pub fn decode(genome: &[f64], queue: &OnlineQueue, roster: &Roster) -> AssignmentPlan {
    let rs = &roster.receivers;
    let u = rs.len();
    let mut remaining: Vec<f64> = rs.iter().map(|r| r.capacity).collect();
    let mut load = vec![0.0; u];
    let mut f1 = 0.0;
    let mut assignments = Vec::with_capacity(queue.len());
    for (task, &gene) in queue.iter().zip(genome) {
        let mut host = None;
        if u > 0 {
            let start = ((gene * u as f64) as usize).min(u - 1);
            host = (0..u)
                .map(|k| (start + k) % u)
                .find(|&i| remaining[i] >= task.required_capacity);
        }
        match host {
            Some(i) => {
                remaining[i] -= task.required_capacity;
                let t = task.data_size / rs[i].capacity;
                load[i] += t;
                f1 += t;
                assignments.push(Assignment {
                    task: task.id,
                    receiver: Some(rs[i].id),
                });
            }
            None => {
                f1 += roster.penalty;
                assignments.push(Assignment {
                    task: task.id,
                    receiver: None,
                });
            }
        }
    }
    let f2 = if u == 0 {
        0.0
    } else {
        let mean = load.iter().sum::<f64>() / u as f64;
        load.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / u as f64
    };
    AssignmentPlan {
        assignments,
        objectives: vec![f1, f2],
    }
}

/// `(communication overhead, fairness loss)` of an individual's plan.
pub fn evaluate_objectives(
    individual: &Individual,
    queue: &OnlineQueue,
    receivers: &[Receiver],
) -> Result<Vec<f64>, MigrationError> {
    if receivers.is_empty() {
        return Err(MigrationError::EmptyRoster);
    }
    Ok(decode(&individual.genome, queue, &Roster::new(queue, receivers)).objectives)
}

fn evaluate_all(pop: &mut [Individual], queue: &OnlineQueue, roster: &Roster, parallel: bool) {
    let pending = |ind: &Individual| ind.objectives.is_none();
    if parallel {
        pop.par_iter_mut().filter(|i| pending(i)).for_each(|ind| {
            ind.objectives = Some(decode(&ind.genome, queue, roster).objectives);
        });
    } else {
        for ind in pop.iter_mut().filter(|i| pending(i)) {
            ind.objectives = Some(decode(&ind.genome, queue, roster).objectives);
        }
    }
}

/// Index of the knee point among `candidates`: smallest sum of min-max
/// normalized objectives, ties to the smaller `f1`, then the smaller index.
pub fn knee_point(pop: &[Individual], candidates: &[usize]) -> Option<usize> {
    let m = candidates.first().map(|&i| pop[i].objectives.as_ref().map_or(0, |o| o.len()))?;
    let mut lo = vec![f64::INFINITY; m];
    let mut hi = vec![f64::NEG_INFINITY; m];
    for &i in candidates {
        for k in 0..m {
            lo[k] = lo[k].min(pop[i].objective(k));
            hi[k] = hi[k].max(pop[i].objective(k));
        }
    }
    let score = |i: usize| -> f64 {
        (0..m)
            .map(|k| {
                let span = hi[k] - lo[k];
                if span > 0.0 {
                    (pop[i].objective(k) - lo[k]) / span
                } else {
                    0.0
                }
            })
            .sum()
    };
    candidates.iter().copied().min_by(|&a, &b| {
        score(a)
            .total_cmp(&score(b))
            .then(pop[a].objective(0).total_cmp(&pop[b].objective(0)))
            .then(a.cmp(&b))
    })
}

/// Materializes the plan of the knee point of the first front.
pub fn assign_tasks(
    population: &[Individual],
    queue: &OnlineQueue,
    receivers: &[Receiver],
) -> Result<AssignmentPlan, MigrationError> {
    let roster = Roster::new(queue, receivers);
    if population.is_empty() || queue.is_empty() {
        return Ok(decode(&vec![0.0; queue.len()], queue, &roster));
    }
    let fronts = fast_nondominated_sort(population)?;
    let knee = knee_point(population, &fronts[0]).expect("first front is non-empty");
    Ok(decode(&population[knee].genome, queue, &roster))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaParams {
    pub pop_size: usize,
    /// Number of generations (`t_max`).
    pub generations: usize,
    pub eta_c: f64,
    pub eta_m: f64,
    pub p_c: f64,
    /// Per-gene mutation probability; `None` means `1 / T`.
    pub p_m: Option<f64>,
    pub selection: SelectionMode,
    /// Evaluate offspring on the rayon pool.
    pub parallel: bool,
}

impl Default for GaParams {
    fn default() -> Self {
        Self {
            pop_size: 50,
            generations: 100,
            eta_c: 15.0,
            eta_m: 20.0,
            p_c: 0.9,
            p_m: None,
            selection: SelectionMode::Truncate,
            parallel: true,
        }
    }
}

impl GaParams {
    pub fn validate(&self) -> Result<(), MigrationError> {
        let bad = |m: &str| Err(MigrationError::InvalidParams(m.into()));
        if self.pop_size < 2 {
            return bad("pop_size must be >= 2");
        }
        if self.generations < 1 {
            return bad("generations must be >= 1");
        }
        if !(self.eta_c > 0.0 && self.eta_m > 0.0) {
            return bad("distribution indices must be positive");
        }
        if !(0.0..=1.0).contains(&self.p_c) {
            return bad("p_c must lie in [0, 1]");
        }
        if let Some(p) = self.p_m {
            if !(0.0..=1.0).contains(&p) {
                return bad("p_m must lie in [0, 1]");
            }
        }
        Ok(())
    }

    /// Total objective evaluations of one run (initial population plus one
    /// offspring batch per generation).
    pub fn evaluation_budget(&self) -> usize {
        self.pop_size * (self.generations + 1)
    }
}

/// One row of the generation log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub gen: usize,
    pub best_f1: f64,
    pub best_f2: f64,
    pub front1_size: usize,
    pub assigned: usize,
    pub unassigned: usize,
}

pub fn write_generation_csv<W: Write>(log: &[GenerationRecord], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for rec in log {
        w.serialize(rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MigrationOutcome {
    pub plan: AssignmentPlan,
    pub population: Vec<Individual>,
    pub log: Vec<GenerationRecord>,
    /// Knee-point objective vector after each generation (index 0 is the
    /// initial population).
    pub elites: Vec<Vec<f64>>,
}

fn record(gen: usize, pop: &[Individual], queue: &OnlineQueue, roster: &Roster) -> (GenerationRecord, Vec<f64>) {
    let front: Vec<usize> = (0..pop.len()).filter(|&i| pop[i].rank == 1).collect();
    let best = |k: usize| front.iter().map(|&i| pop[i].objective(k)).fold(f64::INFINITY, f64::min);
    let knee = knee_point(pop, &front).expect("sorted population has a first front");
    let plan = decode(&pop[knee].genome, queue, roster);
    (
        GenerationRecord {
            gen,
            best_f1: best(0),
            best_f2: best(1),
            front1_size: front.len(),
            assigned: plan.assigned(),
            unassigned: plan.unassigned(),
        },
        plan.objectives,
    )
}

/// Runs the generational loop: tournament, SBX, polynomial mutation, merge,
/// non-dominated sorting, environmental selection, then the capacity-gated
/// assignment of the current knee point.
pub fn run_migration<R: Rng + ?Sized>(
    queue: &OnlineQueue,
    receivers: &[Receiver],
    params: &GaParams,
    rng: &mut R,
) -> Result<MigrationOutcome, MigrationError> {
    params.validate()?;
    let mut seen = HashSet::new();
    for t in queue.iter() {
        t.validate()?;
        if !seen.insert(t.id) {
            return Err(MigrationError::DuplicateTask(t.id));
        }
    }
    let roster = Roster::new(queue, receivers);
    let n_tasks = queue.len();
    if n_tasks == 0 || receivers.is_empty() {
        let plan = decode(&vec![0.0; n_tasks], queue, &roster);
        return Ok(MigrationOutcome {
            elites: vec![plan.objectives.clone()],
            plan,
            population: Vec::new(),
            log: Vec::new(),
        });
    }
    let n = params.pop_size;
    let p_m = params.p_m.unwrap_or(1.0 / n_tasks as f64);

    let mut population: Vec<Individual> = (0..n)
        .map(|_| Individual::new((0..n_tasks).map(|_| rng.gen()).collect()))
        .collect();
    evaluate_all(&mut population, queue, &roster, params.parallel);
    assign_rank_and_crowding(&mut population)?;
    let (_, elite) = record(0, &population, queue, &roster);
    let mut elites = vec![elite];
    let mut log = Vec::with_capacity(params.generations);

    for gen in 1..=params.generations {
        let pool = tournament_indices(&population, n, rng);
        let mut offspring = Vec::with_capacity(n + 1);
        for pair in (0..n).step_by(2) {
            let p1 = &population[pool[pair]].genome;
            let p2 = &population[pool[(pair + 1) % n]].genome;
            let (c1, c2) = sbx(p1, p2, params.eta_c, params.p_c, rng);
            offspring.push(Individual::new(polynomial_mutation(&c1, params.eta_m, p_m, rng)));
            offspring.push(Individual::new(polynomial_mutation(&c2, params.eta_m, p_m, rng)));
        }
        offspring.truncate(n);
        evaluate_all(&mut offspring, queue, &roster, params.parallel);
        let parents = population.clone();
        population = environmental_selection(population, offspring, n, params.selection)?;
        if population.len() < 2 {
            // whole-front selection found no front that fits; keep the parents
            population = parents;
        }
        let (rec, elite) = record(gen, &population, queue, &roster);
        log.push(GenerationRecord { gen, ..rec });
        elites.push(elite);
    }

    let plan = assign_tasks(&population, queue, receivers)?;
    Ok(MigrationOutcome {
        plan,
        population,
        log,
        elites,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomSearchOutcome {
    pub best_f1: f64,
    pub plan: AssignmentPlan,
    pub evaluations: usize,
}

/// Baseline: `budget` uniform genomes, keep the lowest `f1`.
pub fn random_search<R: Rng + ?Sized>(
    queue: &OnlineQueue,
    receivers: &[Receiver],
    budget: usize,
    rng: &mut R,
) -> RandomSearchOutcome {
    let roster = Roster::new(queue, receivers);
    let mut best: Option<AssignmentPlan> = None;
    for _ in 0..budget.max(1) {
        let genome: Vec<f64> = (0..queue.len()).map(|_| rng.gen()).collect();
        let plan = decode(&genome, queue, &roster);
        if best.as_ref().map_or(true, |b| plan.objectives[0] < b.objectives[0]) {
            best = Some(plan);
        }
    }
    let plan = best.expect("at least one evaluation");
    RandomSearchOutcome {
        best_f1: plan.objectives[0],
        plan,
        evaluations: budget.max(1),
    }
}

/// Lowest `f1` present in a population.
pub fn best_f1(population: &[Individual]) -> f64 {
    population.iter().map(|i| i.objective(0)).fold(f64::INFINITY, f64::min)
}
