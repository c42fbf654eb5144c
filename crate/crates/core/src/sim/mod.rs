//! Round-based simulation of mobile users, base stations and the cloud server.
//!
//! A round runs four stages in order:
//!
//! 1. region formation: one window of replicator dynamics moves the region
//!    shares `x`;
//! 2. mobility: users with negative net utility, or hit by an exogenous move,
//!    leave their region mid-task; their tasks are queued and the genetic
//!    migration hands them to staying users of the same region; the leavers
//!    pick a new region by sampling `x`;
//! 3. procurement: every region bids one offer per edge server it hosts, using
//!    its synthetic accuracy for the coming round, and the cloud runs the
//!    auction;
//! 4. rewards: each winning region's payment is split among its users, early
//!    leavers first (half their progress-weighted data share), the rest by
//!    data share among the users that stayed.
//!
//! Everything is driven by one seeded ChaCha stream, so a config plus a seed
//! fixes every output bit.

mod config;

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::auction::{run_auction, AuctionError, Bid, Capacities};
use crate::channel::{capacity, sample_channel, ChannelError, ChannelState};
use crate::evogame::{integrate, region_utility, CostModel, EvoError, GameParams, PopulationState};
use crate::migration::{run_migration, MigrationError, OnlineQueue, Receiver, Task};

pub use config::{parse_config, AccuracyModel, BidBlock, ConfigError, EvoBlock, MigrationBlock, SimConfig};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("evolutionary game: {0}")]
    Evo(#[from] EvoError),
    #[error("migration: {0}")]
    Migration(#[from] MigrationError),
    #[error("auction: {0}")]
    Auction(#[from] AuctionError),
    #[error("channel: {0}")]
    Channel(#[from] ChannelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserState {
    pub id: u64,
    pub region: usize,
    /// Local sample count `M_n`.
    pub data_volume: f64,
    pub channel: ChannelState,
    /// Uplink capacity for the current round.
    pub capacity: f64,
    /// Task taken over from a departed user this round.
    pub active_task: Option<Task>,
    pub cumulative_reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueuedTask {
    pub task: Task,
    /// Region the task was interrupted in.
    pub region: usize,
    /// Rounds spent in the queue.
    pub age: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Server {
    pub id: u64,
    pub region: usize,
    pub t_cmp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    /// Rounds completed so far.
    pub round: usize,
    pub x: PopulationState,
    pub users: Vec<UserState>,
    pub servers: Vec<Server>,
    pub queue: Vec<QueuedTask>,
    /// Global rounds each region has been selected for.
    pub rounds_trained: Vec<u32>,
    pub accuracy: Vec<f64>,
    pub next_task_id: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub region_proportions: PopulationState,
    /// Users per region after re-homing.
    pub region_users: Vec<usize>,
    pub migrations_triggered: usize,
    pub migrations_reassigned: usize,
    pub tasks_expired: usize,
    pub queue_len: usize,
    pub comm_overhead: f64,
    pub regional_accuracy: Vec<f64>,
    pub winners: Vec<u64>,
    pub total_payment: f64,
    pub rewards_distributed: f64,
    pub participation_rate: f64,
    pub auction_unsatisfiable: bool,
}

/// A user leaving its region this round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Departure {
    /// Index into the user list.
    pub user: usize,
    pub region: usize,
    pub progress: f64,
    pub net_utility: f64,
}

fn user_seed(seed: u64, id: u64) -> u64 {
    seed ^ id.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, [lo, hi]: [f64; 2]) -> f64 {
    lo + (hi - lo) * rng.gen::<f64>()
}

/// Index drawn from the categorical distribution `p`.
fn sample_index<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &w) in p.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    p.iter().rposition(|&w| w > 0.0).unwrap_or(p.len() - 1)
}

/// Uploading users over all users; 0 for an empty population.
pub fn participation_rate(uploading: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        uploading as f64 / total as f64
    }
}

/// `A_max (1 - exp(-kappa D r)) (1 - lambda * interruption_rate)`.
pub fn synthetic_accuracy(model: &AccuracyModel, d_eff: f64, rounds: u32, interruption_rate: f64) -> f64 {
    let learned = model.a_max * -(-model.kappa * d_eff.max(0.0) * f64::from(rounds)).exp_m1();
    // exp underflows to 0 for large exponents; stay strictly below the asymptote
    let learned = learned.min(model.a_max * (1.0 - f64::EPSILON));
    learned * (1.0 - model.interruption_penalty * interruption_rate.clamp(0.0, 1.0))
}

impl SimState {
    /// Users round-robin over regions with random data volumes; servers
    /// round-robin over regions with random computation times.
    pub fn new<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> Result<Self, SimError> {
        cfg.validate()?;
        let nb = cfg.n_regions;
        let users: Vec<UserState> = (0..cfg.n_users as u64)
            .map(|id| UserState {
                id,
                region: id as usize % nb,
                data_volume: uniform(rng, cfg.data_volume_range),
                channel: sample_channel(&cfg.channel, 0, user_seed(cfg.seed, id)),
                capacity: 0.0,
                active_task: None,
                cumulative_reward: 0.0,
            })
            .collect();
        let servers = (0..cfg.n_servers as u64)
            .map(|id| Server {
                id,
                region: id as usize % nb,
                t_cmp: cfg.bids.t_cmp * (1.0 + cfg.bids.t_cmp_spread * rng.gen::<f64>()),
            })
            .collect();
        let mut counts = vec![0.0; nb];
        for u in &users {
            counts[u.region] += 1.0;
        }
        Ok(Self {
            round: 0,
            x: PopulationState::normalized(&counts)?,
            users,
            servers,
            queue: Vec::new(),
            rounds_trained: vec![0; nb],
            accuracy: vec![0.0; nb],
            next_task_id: 0,
        })
    }

    pub fn region_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.x.len()];
        for u in &self.users {
            c[u.region] += 1;
        }
        c
    }

    fn refresh_channels(&mut self, cfg: &SimConfig) -> Result<(), ChannelError> {
        for u in &mut self.users {
            u.channel = sample_channel(&cfg.channel, self.round as u64, user_seed(cfg.seed, u.id));
            u.capacity = capacity(&u.channel, &cfg.channel)?;
            u.active_task = None;
        }
        Ok(())
    }

    /// Mean capacity per region; empty regions get the population mean.
    fn region_capacity(&self, nb: usize) -> Vec<f64> {
        let mut sum = vec![0.0; nb];
        let mut n = vec![0usize; nb];
        for u in &self.users {
            sum[u.region] += u.capacity;
            n[u.region] += 1;
        }
        let overall = sum.iter().sum::<f64>() / self.users.len().max(1) as f64;
        (0..nb)
            .map(|b| if n[b] > 0 { sum[b] / n[b] as f64 } else { overall })
            .collect()
    }

    /// Game parameters of the current population: announced rewards and mean
    /// data volume per region relative to the population mean.
    pub fn game_params(&self, cfg: &SimConfig) -> GameParams {
        let nb = cfg.n_regions;
        let mut game = GameParams::evenly_spaced(nb, cfg.reward_range, cfg.evogame.unit_cost, cfg.evogame.learning_rate);
        if !cfg.rewards_enabled {
            game.rewards = vec![0.0; nb];
        }
        let overall = self.users.iter().map(|u| u.data_volume).sum::<f64>() / self.users.len().max(1) as f64;
        let mut sum = vec![0.0; nb];
        let mut n = vec![0usize; nb];
        for u in &self.users {
            sum[u.region] += u.data_volume;
            n[u.region] += 1;
        }
        game.data_volume = (0..nb)
            .map(|b| if n[b] > 0 && overall > 0.0 { sum[b] / n[b] as f64 / overall } else { 1.0 })
            .collect();
        game.cost_model = CostModel::Linear;
        game
    }
}

/// Decides who leaves this round.
///
/// Every user consumes exactly two draws, a move draw and a progress draw, in
/// id order. A user leaves if its net utility is negative or if the move draw
/// falls below `p_move`, multiplied by `congestion_coeff` when its region
/// holds more users than the mean.
pub fn trigger_migrations<R: Rng + ?Sized>(
    users: &[UserState],
    x: &PopulationState,
    game: &GameParams,
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<Vec<Departure>, EvoError> {
    let nb = x.len();
    let mut load = vec![0usize; nb];
    for u in users {
        load[u.region] += 1;
    }
    let mean_load = users.len() as f64 / nb as f64;
    let mut out = Vec::new();
    for (i, u) in users.iter().enumerate() {
        let move_draw: f64 = rng.gen();
        let progress: f64 = rng.gen();
        let net_utility = region_utility(x, u.region, game, u.capacity)?;
        let congested = load[u.region] as f64 > mean_load;
        let p = (cfg.p_move * if congested { cfg.congestion_coeff } else { 1.0 }).min(1.0);
        if net_utility < 0.0 || move_draw < p {
            out.push(Departure {
                user: i,
                region: u.region,
                progress,
                net_utility,
            });
        }
    }
    Ok(out)
}

/// Advances the simulation by one round.
pub fn run_round<R: Rng + ?Sized>(state: &mut SimState, cfg: &SimConfig, rng: &mut R) -> Result<RoundMetrics, SimError> {
    let nb = cfg.n_regions;
    state.refresh_channels(cfg)?;

    // 1. region formation
    let game = state.game_params(cfg);
    let q_region = state.region_capacity(nb);
    let traj = integrate(&state.x, &game, &q_region, cfg.evogame.dt, cfg.evogame.steps_per_round())?;
    state.x = traj.last_state().clone();

    // 2. mobility and migration
    let start_region: Vec<usize> = state.users.iter().map(|u| u.region).collect();
    let mut start_users = vec![0usize; nb];
    let mut start_data = vec![0.0; nb];
    for u in &state.users {
        start_users[u.region] += 1;
        start_data[u.region] += u.data_volume;
    }
    let payload = cfg.model_size * cfg.compression.payload_fraction();
    let departures = trigger_migrations(&state.users, &state.x, &game, cfg, rng)?;
    let mut departed = vec![false; state.users.len()];
    let mut departures_per_region = vec![0usize; nb];
    let mut d_eff = vec![0.0; nb];
    for d in &departures {
        departed[d.user] = true;
        departures_per_region[d.region] += 1;
        let user = &state.users[d.user];
        d_eff[d.region] += d.progress * user.data_volume;
        state.queue.push(QueuedTask {
            task: Task {
                id: state.next_task_id,
                origin_user: user.id,
                required_capacity: cfg.migration.task_capacity,
                // the receiver downloads the partially trained model
                data_size: payload,
                progress: d.progress,
            },
            region: d.region,
            age: 0,
        });
        state.next_task_id += 1;
    }
    for d in &departures {
        state.users[d.user].region = sample_index(state.x.as_slice(), rng);
    }

    let stayers: Vec<Vec<usize>> = (0..nb)
        .map(|b| (0..state.users.len()).filter(|&i| start_region[i] == b && !departed[i]).collect())
        .collect();
    let mut overhead = vec![0.0; nb];
    for (b, members) in stayers.iter().enumerate() {
        for &i in members {
            d_eff[b] += state.users[i].data_volume;
            overhead[b] += payload / state.users[i].capacity;
        }
    }

    let mut reassigned = 0;
    for (b, members) in stayers.iter().enumerate() {
        let pending: Vec<Task> = state.queue.iter().filter(|t| t.region == b).map(|t| t.task.clone()).collect();
        if pending.is_empty() {
            continue;
        }
        let queue: OnlineQueue = pending.into_iter().collect();
        let receivers: Vec<Receiver> = members
            .iter()
            .map(|&i| Receiver {
                id: i as u64,
                capacity: state.users[i].capacity,
            })
            .collect();
        let mut ga_rng = ChaCha8Rng::seed_from_u64(rng.gen());
        let outcome = run_migration(&queue, &receivers, &cfg.migration.ga, &mut ga_rng)?;
        for a in &outcome.plan.assignments {
            let Some(host) = a.receiver else { continue };
            let pos = state.queue.iter().position(|t| t.task.id == a.task).expect("task is queued");
            let task = state.queue.remove(pos).task;
            d_eff[b] += state.users[task.origin_user as usize].data_volume * (1.0 - task.progress);
            let host = &mut state.users[host as usize];
            overhead[b] += task.data_size / host.capacity;
            host.active_task = Some(task);
            reassigned += 1;
        }
    }
    for t in &mut state.queue {
        t.age += 1;
    }
    let before = state.queue.len();
    state.queue.retain(|t| t.age <= cfg.migration.queue_max_age);
    let expired = before - state.queue.len();

    // 3. procurement
    let acc_next: Vec<f64> = (0..nb)
        .map(|b| {
            let rate = if start_users[b] > 0 {
                departures_per_region[b] as f64 / start_users[b] as f64
            } else {
                0.0
            };
            synthetic_accuracy(&cfg.accuracy, d_eff[b], state.rounds_trained[b] + 1, rate)
        })
        .collect();
    let mut bids = Vec::new();
    for s in &state.servers {
        let noise = 1.0 + cfg.bids.price_noise * (2.0 * rng.gen::<f64>() - 1.0);
        let b = s.region;
        if acc_next[b] <= 0.0 || overhead[b] <= 0.0 {
            continue;
        }
        let base = cfg.bids.cost_per_overhead * overhead[b];
        bids.push(Bid {
            bs_id: b as u64,
            schedule_id: s.id,
            price: base * noise,
            accuracy: acc_next[b],
            quality: acc_next[b],
            t_cmp: s.t_cmp,
            t_max: cfg.bids.t_max,
            true_cost: base,
        });
    }
    let caps: Capacities = (0..nb).map(|b| (b as u64, q_region[b])).collect();
    let (winners, payments, unsatisfiable) = match run_auction(&bids, &cfg.auction, &caps) {
        Ok(out) => (out.winner_ids(), out.payments, false),
        Err(AuctionError::Unsatisfiable { .. }) => (Vec::new(), BTreeMap::new(), true),
        Err(e) => return Err(e.into()),
    };

    // 4. rewards
    let mut distributed = 0.0;
    for &w in &winners {
        let b = w as usize;
        state.rounds_trained[b] += 1;
        state.accuracy[b] = acc_next[b];
        let pool = if cfg.rewards_enabled { payments[&w] } else { 0.0 };
        if pool <= 0.0 || start_data[b] <= 0.0 {
            continue;
        }
        let mut claimed = 0.0;
        for d in departures.iter().filter(|d| d.region == b) {
            let claim = 0.5 * d.progress * state.users[d.user].data_volume / start_data[b] * pool;
            state.users[d.user].cumulative_reward += claim;
            claimed += claim;
        }
        let rest = pool - claimed;
        let stay_data: f64 = stayers[b].iter().map(|&i| state.users[i].data_volume).sum();
        if stay_data > 0.0 {
            for &i in &stayers[b] {
                let share = rest * state.users[i].data_volume / stay_data;
                state.users[i].cumulative_reward += share;
                distributed += share;
            }
        }
        distributed += claimed;
    }

    let uploading: usize = stayers.iter().map(Vec::len).sum();
    state.round += 1;
    Ok(RoundMetrics {
        round: state.round,
        region_proportions: state.x.clone(),
        region_users: state.region_counts(),
        migrations_triggered: departures.len(),
        migrations_reassigned: reassigned,
        tasks_expired: expired,
        queue_len: state.queue.len(),
        comm_overhead: overhead.iter().sum(),
        regional_accuracy: state.accuracy.clone(),
        winners,
        total_payment: payments.values().sum(),
        rewards_distributed: distributed,
        participation_rate: participation_rate(uploading, state.users.len()),
        auction_unsatisfiable: unsatisfiable,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimRun {
    pub metrics: Vec<RoundMetrics>,
    pub state: SimState,
}

impl SimRun {
    pub fn mean_participation(&self) -> f64 {
        if self.metrics.is_empty() {
            return 0.0;
        }
        self.metrics.iter().map(|m| m.participation_rate).sum::<f64>() / self.metrics.len() as f64
    }
}

/// Runs `cfg.rounds` rounds from the seeded initial state.
pub fn simulate(cfg: &SimConfig) -> Result<SimRun, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = SimState::new(cfg, &mut rng)?;
    let mut metrics = Vec::with_capacity(cfg.rounds);
    for _ in 0..cfg.rounds {
        metrics.push(run_round(&mut state, cfg, &mut rng)?);
    }
    Ok(SimRun { metrics, state })
}

pub fn write_metrics_jsonl<W: Write>(metrics: &[RoundMetrics], mut out: W) -> std::io::Result<()> {
    for m in metrics {
        serde_json::to_writer(&mut out, m)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// One row per round; per-region vectors are spread over numbered columns.
pub fn write_metrics_csv<W: Write>(metrics: &[RoundMetrics], n_regions: usize, out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["round".to_string()];
    for prefix in ["x", "users", "accuracy"] {
        header.extend((1..=n_regions).map(|b| format!("{prefix}_{b}")));
    }
    header.extend(
        [
            "migrations_triggered",
            "migrations_reassigned",
            "tasks_expired",
            "queue_len",
            "comm_overhead",
            "winners",
            "total_payment",
            "rewards_distributed",
            "participation_rate",
            "auction_unsatisfiable",
        ]
        .map(String::from),
    );
    w.write_record(&header)?;
    for m in metrics {
        let mut row = vec![m.round.to_string()];
        row.extend(m.region_proportions.as_slice().iter().map(f64::to_string));
        row.extend(m.region_users.iter().map(usize::to_string));
        row.extend(m.regional_accuracy.iter().map(f64::to_string));
        row.extend([
            m.migrations_triggered.to_string(),
            m.migrations_reassigned.to_string(),
            m.tasks_expired.to_string(),
            m.queue_len.to_string(),
            m.comm_overhead.to_string(),
            m.winners.iter().map(u64::to_string).collect::<Vec<_>>().join(" "),
            m.total_payment.to_string(),
            m.rewards_distributed.to_string(),
            m.participation_rate.to_string(),
            m.auction_unsatisfiable.to_string(),
        ]);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
