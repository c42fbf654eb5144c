//! Pareto dominance, fast non-dominated sorting, crowding distance and
//! environmental selection. All objectives are minimized.

use serde::{Deserialize, Serialize};

use super::{Individual, MigrationError};

/// `a` dominates `b`: no worse everywhere, strictly better somewhere.
pub fn dominates(a: &[f64], b: &[f64]) -> Result<bool, MigrationError> {
    if a.len() != b.len() {
        return Err(MigrationError::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(dominates_unchecked(a, b))
}

pub(crate) fn dominates_unchecked(a: &[f64], b: &[f64]) -> bool {
    let mut strictly = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        if x < y {
            strictly = true;
        }
    }
    strictly
}

/// Splits objective vectors into Pareto fronts, best first.
///
/// `O(m N^2)`: one pairwise pass builds the domination counts and the
/// dominated sets, then fronts are peeled off by decrementing counts. Indices
/// inside each front are ascending.
pub fn sort_objectives(objectives: &[&[f64]]) -> Result<Vec<Vec<usize>>, MigrationError> {
    let n = objectives.len();
    if let Some(first) = objectives.first() {
        if let Some(bad) = objectives.iter().find(|o| o.len() != first.len()) {
            return Err(MigrationError::DimensionMismatch {
                left: first.len(),
                right: bad.len(),
            });
        }
    }
    let mut dominated_by: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut domination_count = vec![0usize; n];
    for p in 0..n {
        for q in (p + 1)..n {
            if dominates_unchecked(objectives[p], objectives[q]) {
                dominated_by[p].push(q);
                domination_count[q] += 1;
            } else if dominates_unchecked(objectives[q], objectives[p]) {
                dominated_by[q].push(p);
                domination_count[p] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| domination_count[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &p in &current {
            for &q in &dominated_by[p] {
                domination_count[q] -= 1;
                if domination_count[q] == 0 {
                    next.push(q);
                }
            }
        }
        next.sort_unstable();
        fronts.push(std::mem::replace(&mut current, next));
    }
    Ok(fronts)
}

/// Non-dominated sorting of an evaluated population.
pub fn fast_nondominated_sort(pop: &[Individual]) -> Result<Vec<Vec<usize>>, MigrationError> {
    let objectives = objective_refs(pop)?;
    sort_objectives(&objectives)
}

pub(crate) fn objective_refs(pop: &[Individual]) -> Result<Vec<&[f64]>, MigrationError> {
    pop.iter()
        .enumerate()
        .map(|(i, ind)| ind.objectives.as_deref().ok_or(MigrationError::Unevaluated(i)))
        .collect()
}

/// Crowding distance of each member of `front` (same order as `front`).
/// Boundary points of every objective get `f64::INFINITY`.
pub fn crowding_distance(objectives: &[&[f64]], front: &[usize]) -> Vec<f64> {
    let k = front.len();
    let mut dist = vec![0.0; k];
    if k <= 2 {
        return vec![f64::INFINITY; k];
    }
    let m = objectives[front[0]].len();
    let mut order: Vec<usize> = (0..k).collect();
    for obj in 0..m {
        order.sort_by(|&a, &b| {
            objectives[front[a]][obj]
                .total_cmp(&objectives[front[b]][obj])
                .then(a.cmp(&b))
        });
        let lo = objectives[front[order[0]]][obj];
        let hi = objectives[front[order[k - 1]]][obj];
        dist[order[0]] = f64::INFINITY;
        dist[order[k - 1]] = f64::INFINITY;
        let span = hi - lo;
        if span <= 0.0 {
            continue;
        }
        for w in 1..k - 1 {
            let prev = objectives[front[order[w - 1]]][obj];
            let next = objectives[front[order[w + 1]]][obj];
            dist[order[w]] += (next - prev) / span;
        }
    }
    dist
}

/// Recomputes rank (1-based) and crowding distance for every individual.
pub fn assign_rank_and_crowding(pop: &mut [Individual]) -> Result<Vec<Vec<usize>>, MigrationError> {
    let fronts = fast_nondominated_sort(pop)?;
    let crowding: Vec<(usize, usize, f64)> = {
        let objectives = objective_refs(pop)?;
        fronts
            .iter()
            .enumerate()
            .flat_map(|(r, front)| {
                let d = crowding_distance(&objectives, front);
                front.iter().zip(d).map(move |(&i, d)| (i, r + 1, d)).collect::<Vec<_>>()
            })
            .collect()
    };
    for (i, rank, d) in crowding {
        pop[i].rank = rank;
        pop[i].crowding = d;
    }
    Ok(fronts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMode {
    /// Whole fronts while they fit, then the overflowing front truncated by
    /// crowding distance so the result has exactly `n` members.
    #[default]
    Truncate,
    /// Only whole fronts that fit in the remaining room; may return fewer
    /// than `n` individuals.
    WholeFront,
}

/// Merges parents and offspring and keeps the best `n` by (front, crowding).
pub fn environmental_selection(
    parents: Vec<Individual>,
    offspring: Vec<Individual>,
    n: usize,
    mode: SelectionMode,
) -> Result<Vec<Individual>, MigrationError> {
    if n == 0 {
        return Err(MigrationError::InvalidParams("target population size must be >= 1".into()));
    }
    let mut merged = parents;
    merged.extend(offspring);
    if merged.len() < n {
        return Err(MigrationError::PopulationTooSmall {
            have: merged.len(),
            need: n,
        });
    }
    let fronts = fast_nondominated_sort(&merged)?;
    let mut chosen: Vec<usize> = Vec::with_capacity(n);
    for front in &fronts {
        let room = n - chosen.len();
        if room == 0 {
            break;
        }
        if front.len() <= room {
            chosen.extend(front);
            continue;
        }
        match mode {
            SelectionMode::WholeFront => continue,
            SelectionMode::Truncate => {
                let objectives = objective_refs(&merged)?;
                let dist = crowding_distance(&objectives, front);
                let mut order: Vec<usize> = (0..front.len()).collect();
                order.sort_by(|&a, &b| dist[b].total_cmp(&dist[a]).then(front[a].cmp(&front[b])));
                chosen.extend(order.into_iter().take(room).map(|w| front[w]));
                break;
            }
        }
    }
    let mut slots: Vec<Option<Individual>> = merged.into_iter().map(Some).collect();
    let mut selected: Vec<Individual> = chosen.into_iter().map(|i| slots[i].take().expect("index chosen once")).collect();
    assign_rank_and_crowding(&mut selected)?;
    Ok(selected)
}
