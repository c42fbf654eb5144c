//! Replicator dynamics for region selection.
//!
//! The population state `x` lives on the probability simplex: `x[b]` is the
//! share of users whose strategy is "train with the base station of region
//! `b`". A user in region `b` earns the region's reward weighted by the
//! region's data share, minus a per-unit channel cost:
//!
//! ```text
//! u_b(x) = R_b * x_b M_b / sum_c x_c M_c  -  xi * q_b
//! ubar(x) = sum_b x_b u_b(x)
//! dx_b/dt = Delta * x_b * (u_b - ubar)
//! ```
//!
//! The module integrates this system with explicit Euler (plus projection back
//! onto the simplex), detects when the flow has come to rest, and exposes the
//! quantities used to check the stability argument numerically: the quadratic
//! Lyapunov function `G(x) = sum x_b^2` with its time derivative, and a
//! finite-difference estimate of the Jacobian bound of the right-hand side.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvoError {
    #[error("population state is not on the simplex: {0}")]
    NotOnSimplex(String),
    #[error("dimension mismatch: expected {expected} regions, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("weighted population sum_b x_b M_b is zero")]
    ZeroWeightedPopulation,
    #[error("invalid game parameter: {0}")]
    InvalidParams(String),
    #[error("integration step must be positive, got {0}")]
    BadStep(f64),
    #[error("non-finite state at integration step {step}")]
    NonFinite { step: usize },
}

/// Tolerance on `|sum x - 1|` for a vector to count as a simplex point.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Region-membership proportions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PopulationState(Vec<f64>);

impl PopulationState {
    pub fn new(x: Vec<f64>) -> Result<Self, EvoError> {
        if x.is_empty() {
            return Err(EvoError::NotOnSimplex("empty vector".into()));
        }
        if let Some(v) = x.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(EvoError::NotOnSimplex(format!("component {v} outside [0, 1]")));
        }
        let sum: f64 = x.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(EvoError::NotOnSimplex(format!("components sum to {sum}")));
        }
        Ok(Self(x))
    }

    /// Rescales a non-negative vector onto the simplex.
    pub fn normalized(raw: &[f64]) -> Result<Self, EvoError> {
        if raw.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(EvoError::NotOnSimplex(format!("{raw:?} has negative or non-finite entries")));
        }
        let sum: f64 = raw.iter().sum();
        if sum <= 0.0 {
            return Err(EvoError::NotOnSimplex("all-zero vector".into()));
        }
        Self::new(raw.iter().map(|v| v / sum).collect())
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn vertex(b: usize, n: usize) -> Self {
        let mut x = vec![0.0; n];
        x[b] = 1.0;
        Self(x)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for PopulationState {
    type Error = EvoError;
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<PopulationState> for Vec<f64> {
    fn from(p: PopulationState) -> Self {
        p.0
    }
}

/// How the per-unit training cost scales with channel capacity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CostModel {
    /// `xi * q`, as written in the utility function.
    #[default]
    Linear,
    /// `xi * task_bits / q`: cost proportional to upload time.
    PerBit { task_bits: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameParams {
    /// Reward `R_b` announced by each region's base station.
    pub rewards: Vec<f64>,
    /// Aggregate data weight `M_b` per region.
    pub data_volume: Vec<f64>,
    /// Per-unit training cost `xi`.
    pub unit_cost: f64,
    /// Strategy adaptation rate `Delta`.
    pub learning_rate: f64,
    #[serde(default)]
    pub cost_model: CostModel,
}

impl GameParams {
    /// Rewards evenly spaced over `reward_range`, unit data weights.
    pub fn evenly_spaced(n_regions: usize, reward_range: [f64; 2], unit_cost: f64, learning_rate: f64) -> Self {
        let [lo, hi] = reward_range;
        let rewards = (0..n_regions)
            .map(|b| {
                if n_regions == 1 {
                    lo
                } else {
                    lo + (hi - lo) * b as f64 / (n_regions - 1) as f64
                }
            })
            .collect();
        Self {
            rewards,
            data_volume: vec![1.0; n_regions],
            unit_cost,
            learning_rate,
            cost_model: CostModel::Linear,
        }
    }

    pub fn n_regions(&self) -> usize {
        self.rewards.len()
    }

    pub fn validate(&self) -> Result<(), EvoError> {
        let n = self.n_regions();
        if n == 0 {
            return Err(EvoError::InvalidParams("no regions".into()));
        }
        if self.data_volume.len() != n {
            return Err(EvoError::Dimension {
                expected: n,
                got: self.data_volume.len(),
            });
        }
        if self.rewards.iter().chain(&self.data_volume).any(|v| !v.is_finite() || *v < 0.0) {
            return Err(EvoError::InvalidParams("rewards and data volumes must be finite and >= 0".into()));
        }
        if !(self.unit_cost >= 0.0) || !self.unit_cost.is_finite() {
            return Err(EvoError::InvalidParams(format!("unit_cost {}", self.unit_cost)));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(EvoError::InvalidParams(format!("learning_rate {}", self.learning_rate)));
        }
        Ok(())
    }

    fn cost(&self, q: f64) -> f64 {
        match self.cost_model {
            CostModel::Linear => self.unit_cost * q,
            CostModel::PerBit { task_bits } => self.unit_cost * task_bits / q,
        }
    }

    fn check_dims(&self, x: &[f64], q: &[f64]) -> Result<(), EvoError> {
        let n = self.n_regions();
        for got in [x.len(), q.len()] {
            if got != n {
                return Err(EvoError::Dimension { expected: n, got });
            }
        }
        Ok(())
    }
}

fn weighted_total(x: &[f64], params: &GameParams) -> Result<f64, EvoError> {
    let s: f64 = x.iter().zip(&params.data_volume).map(|(x, m)| x * m).sum();
    if s == 0.0 {
        return Err(EvoError::ZeroWeightedPopulation);
    }
    Ok(s)
}

/// Utility of a user in region `b` facing channel capacity `q`.
pub fn region_utility(x: &PopulationState, b: usize, params: &GameParams, q: f64) -> Result<f64, EvoError> {
    let x = x.as_slice();
    if x.len() != params.n_regions() || b >= x.len() {
        return Err(EvoError::Dimension {
            expected: params.n_regions(),
            got: x.len(),
        });
    }
    let s = weighted_total(x, params)?;
    Ok(params.rewards[b] * (x[b] * params.data_volume[b] / s) - params.cost(q))
}

fn utilities_raw(x: &[f64], params: &GameParams, q: &[f64]) -> Result<Vec<f64>, EvoError> {
    params.check_dims(x, q)?;
    let s = weighted_total(x, params)?;
    Ok((0..x.len())
        .map(|b| params.rewards[b] * (x[b] * params.data_volume[b] / s) - params.cost(q[b]))
        .collect())
}

/// Per-region utilities `u_b(x)`.
pub fn utilities(x: &PopulationState, params: &GameParams, q: &[f64]) -> Result<Vec<f64>, EvoError> {
    utilities_raw(x.as_slice(), params, q)
}

/// Population-average utility `sum_b x_b u_b`.
pub fn average_utility(x: &PopulationState, params: &GameParams, q: &[f64]) -> Result<f64, EvoError> {
    let u = utilities(x, params, q)?;
    Ok(x.as_slice().iter().zip(&u).map(|(x, u)| x * u).sum())
}

/// Right-hand side of the replicator equation.
///
/// On the simplex `u_b - ubar = sum_c x_c (u_b - u_c)`, and this pairwise form
/// is what gets evaluated: utility differences that are equal in floating
/// point cancel exactly, so vertices and equal-utility states are exact rest
/// points.
pub fn replicator_rhs(x: &PopulationState, params: &GameParams, q: &[f64]) -> Result<Vec<f64>, EvoError> {
    let x = x.as_slice();
    let u = utilities_raw(x, params, q)?;
    Ok(pairwise_rhs(x, &u, params.learning_rate))
}

fn pairwise_rhs(x: &[f64], u: &[f64], delta: f64) -> Vec<f64> {
    (0..x.len())
        .map(|b| {
            let excess: f64 = x.iter().zip(u).map(|(xc, uc)| xc * (u[b] - uc)).sum();
            delta * x[b] * excess
        })
        .collect()
}

/// `Delta * x_b * (u_b - sum_c x_c u_c)` evaluated verbatim, valid off the
/// simplex too. Used for the Jacobian probe.
fn literal_rhs(x: &[f64], params: &GameParams, q: &[f64]) -> Result<Vec<f64>, EvoError> {
    let u = utilities_raw(x, params, q)?;
    let ubar: f64 = x.iter().zip(&u).map(|(x, u)| x * u).sum();
    Ok(x.iter().zip(&u).map(|(x, u)| params.learning_rate * x * (u - ubar)).collect())
}

/// Sampled solution of the replicator equation.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<PopulationState>,
    pub derivatives: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_state(&self) -> &PopulationState {
        self.states.last().expect("trajectory holds at least x0")
    }

    /// Writes `t, x_1..x_B, dx_1..dx_B` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        let b = self.states.first().map_or(0, |s| s.len());
        let mut header = vec!["t".to_string()];
        header.extend((1..=b).map(|i| format!("x_{i}")));
        header.extend((1..=b).map(|i| format!("dx_{i}")));
        w.write_record(&header)?;
        for ((t, x), dx) in self.times.iter().zip(&self.states).zip(&self.derivatives) {
            let mut row = Vec::with_capacity(1 + 2 * b);
            row.push(t.to_string());
            row.extend(x.as_slice().iter().map(|v| v.to_string()));
            row.extend(dx.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Explicit Euler with projection: after each step, clamp to `[0, 1]` and
/// rescale to unit sum. Records `horizon + 1` samples including `x0`.
pub fn integrate(
    x0: &PopulationState,
    params: &GameParams,
    q: &[f64],
    dt: f64,
    horizon: usize,
) -> Result<Trajectory, EvoError> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(EvoError::BadStep(dt));
    }
    params.validate()?;
    let mut times = Vec::with_capacity(horizon + 1);
    let mut states = Vec::with_capacity(horizon + 1);
    let mut derivatives = Vec::with_capacity(horizon + 1);

    let mut x = x0.clone();
    let mut dx = replicator_rhs(&x, params, q)?;
    times.push(0.0);
    for step in 1..=horizon {
        if dx.iter().any(|v| !v.is_finite()) {
            return Err(EvoError::NonFinite { step });
        }
        let mut next: Vec<f64> = x.as_slice().iter().zip(&dx).map(|(x, d)| (x + dt * d).clamp(0.0, 1.0)).collect();
        let sum: f64 = next.iter().sum();
        if !sum.is_finite() || sum <= 0.0 {
            return Err(EvoError::NonFinite { step });
        }
        next.iter_mut().for_each(|v| *v /= sum);
        states.push(std::mem::replace(&mut x, PopulationState(next)));
        derivatives.push(std::mem::take(&mut dx));
        dx = replicator_rhs(&x, params, q).map_err(|e| match e {
            EvoError::ZeroWeightedPopulation => EvoError::NonFinite { step },
            other => other,
        })?;
        times.push(step as f64 * dt);
    }
    if dx.iter().any(|v| !v.is_finite()) {
        return Err(EvoError::NonFinite { step: horizon });
    }
    states.push(x);
    derivatives.push(dx);
    Ok(Trajectory {
        times,
        states,
        derivatives,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumReport {
    /// First sample time from which `|dx|_inf < tol` holds to the end.
    pub time: f64,
    pub index: usize,
    /// Terminal state of the trajectory.
    pub state: PopulationState,
}

pub fn detect_equilibrium(traj: &Trajectory, tol: f64) -> Option<EquilibriumReport> {
    let mut first = None;
    for (i, dx) in traj.derivatives.iter().enumerate().rev() {
        if sup_norm(dx) < tol {
            first = Some(i);
        } else {
            break;
        }
    }
    first.map(|index| EquilibriumReport {
        time: traj.times[index],
        index,
        state: traj.last_state().clone(),
    })
}

/// `G(x) = sum_b x_b^2`.
pub fn lyapunov_value(x: &PopulationState) -> f64 {
    x.as_slice().iter().map(|v| v * v).sum()
}

/// `dG/dt = 2 sum_b x_b dx_b/dt` along the replicator flow.
pub fn lyapunov_derivative(x: &PopulationState, params: &GameParams, q: &[f64]) -> Result<f64, EvoError> {
    let dx = replicator_rhs(x, params, q)?;
    Ok(2.0 * x.as_slice().iter().zip(&dx).map(|(x, d)| x * d).sum::<f64>())
}

/// Largest `|d y_b / d x_c|` seen over `n_samples` interior points.
///
/// Points are drawn uniformly on the simplex; partials are central
/// differences of the right-hand side in each raw coordinate.
pub fn lipschitz_probe<R: Rng + ?Sized>(
    params: &GameParams,
    q: &[f64],
    n_samples: usize,
    rng: &mut R,
) -> Result<f64, EvoError> {
    params.validate()?;
    let n = params.n_regions();
    let h = 1e-6;
    let mut bound = 0.0f64;
    for _ in 0..n_samples.max(2) {
        let raw: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
        let sum: f64 = raw.iter().sum();
        let x: Vec<f64> = raw.iter().map(|v| v / sum).collect();
        for c in 0..n {
            let mut plus = x.clone();
            let mut minus = x.clone();
            plus[c] += h;
            minus[c] -= h;
            let yp = literal_rhs(&plus, params, q)?;
            let ym = literal_rhs(&minus, params, q)?;
            for b in 0..n {
                bound = bound.max(((yp[b] - ym[b]) / (2.0 * h)).abs());
            }
        }
    }
    Ok(bound)
}
