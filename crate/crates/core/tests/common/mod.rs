//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use hfl_sim::auction::{AuctionConfig, Bid, Capacities};
use hfl_sim::migration::{OnlineQueue, Receiver, Task};
use rand::Rng;

/// Pareto fronts by repeated O(N^2 m) peeling, indices ascending.
pub fn brute_fronts(objs: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let dom = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| x <= y) && a.iter().zip(b).any(|(x, y)| x < y);
    let mut left: Vec<usize> = (0..objs.len()).collect();
    let mut fronts = Vec::new();
    while !left.is_empty() {
        let front: Vec<usize> = left
            .iter()
            .copied()
            .filter(|&i| !left.iter().any(|&j| j != i && dom(&objs[j], &objs[i])))
            .collect();
        left.retain(|i| !front.contains(i));
        fronts.push(front);
    }
    fronts
}

pub fn ref_dominates(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x <= y) && a.iter().zip(b).any(|(x, y)| x < y)
}

/// Random objective vectors on a coarse grid so ties and duplicates occur.
pub fn random_objectives<R: Rng>(rng: &mut R, n: usize, m: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..m).map(|_| f64::from(rng.gen_range(0..20u32)) / 4.0).collect())
        .collect()
}

pub fn random_instance<R: Rng>(rng: &mut R, tasks: usize, users: usize) -> (OnlineQueue, Vec<Receiver>) {
    let queue = (0..tasks as u64)
        .map(|id| Task {
            id,
            origin_user: 1000 + id,
            required_capacity: rng.gen_range(0.5..2.0),
            data_size: rng.gen_range(1.0..10.0),
            progress: rng.gen_range(0.0..0.9),
        })
        .collect();
    let receivers = (0..users as u64)
        .map(|id| Receiver {
            id,
            capacity: rng.gen_range(0.3..4.0),
        })
        .collect();
    (queue, receivers)
}

/// `(f1, f2)` of a complete assignment (`None` = unassigned), computed from
/// the objective definitions. `penalty` is charged per unassigned task.
pub fn plan_objectives(tasks: &[Task], receivers: &[Receiver], hosts: &[Option<usize>], penalty: f64) -> (f64, f64) {
    let mut load = vec![0.0; receivers.len()];
    let mut f1 = 0.0;
    for (t, h) in tasks.iter().zip(hosts) {
        match h {
            Some(r) => {
                let time = t.data_size / receivers[*r].capacity;
                load[*r] += time;
                f1 += time;
            }
            None => f1 += penalty,
        }
    }
    let n = load.len() as f64;
    let mean = load.iter().sum::<f64>() / n;
    (f1, load.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / n)
}

/// Minimum `f1` over every capacity-feasible assignment in which a task is
/// left unassigned only if no receiver could still take it.
pub fn exhaustive_min_f1(tasks: &[Task], receivers: &[Receiver], penalty: f64) -> f64 {
    fn go(
        k: usize,
        tasks: &[Task],
        receivers: &[Receiver],
        left: &mut Vec<f64>,
        hosts: &mut Vec<Option<usize>>,
        penalty: f64,
        best: &mut f64,
    ) {
        if k == tasks.len() {
            *best = best.min(plan_objectives(tasks, receivers, hosts, penalty).0);
            return;
        }
        let need = tasks[k].required_capacity;
        let mut any = false;
        for r in 0..receivers.len() {
            if left[r] >= need {
                any = true;
                left[r] -= need;
                hosts.push(Some(r));
                go(k + 1, tasks, receivers, left, hosts, penalty, best);
                hosts.pop();
                left[r] += need;
            }
        }
        if !any {
            hosts.push(None);
            go(k + 1, tasks, receivers, left, hosts, penalty, best);
            hosts.pop();
        }
    }
    let mut left: Vec<f64> = receivers.iter().map(|r| r.capacity).collect();
    let mut best = f64::INFINITY;
    go(0, tasks, receivers, &mut left, &mut Vec::new(), penalty, &mut best);
    best
}

/// Truthful random auction in which at least `k + 1` stations are feasible.
pub fn random_auction<R: Rng>(rng: &mut R, n_bs: usize, k: usize) -> (Vec<Bid>, AuctionConfig, Capacities) {
    let cfg = AuctionConfig {
        k_min: k,
        t_g: 20,
        eta: 1.0,
        ..AuctionConfig::default()
    };
    let mut bids = Vec::new();
    for bs in 0..n_bs as u64 {
        let schedules = rng.gen_range(1..=3);
        for j in 0..schedules {
            let cost = rng.gen_range(1.0..100.0);
            // the first k + 1 stations always hold a feasible first schedule
            let forced = (bs as usize) <= k && j == 0;
            let accuracy = if forced || rng.gen_bool(0.8) {
                rng.gen_range(0.0..0.9)
            } else {
                rng.gen_range(0.96..0.99)
            };
            bids.push(Bid {
                bs_id: bs,
                schedule_id: j,
                price: cost,
                accuracy,
                quality: rng.gen_range(0.1..1.0),
                t_cmp: rng.gen_range(1.0..2.0),
                t_max: if forced { rng.gen_range(1.0..2.0) } else { rng.gen_range(1.0..3.0) },
                true_cost: cost,
            });
        }
    }
    let caps = (0..n_bs as u64).map(|bs| (bs, rng.gen_range(1.0..3.0))).collect();
    (bids, cfg, caps)
}

/// Literal feasibility check, written out independently of the library.
pub fn is_feasible(b: &Bid, cfg: &AuctionConfig, caps: &Capacities) -> bool {
    let q = caps.get(&b.bs_id).copied().unwrap_or(0.0);
    f64::from(cfg.t_g) * (1.0 - b.accuracy) >= 1.0 - 1e-12 && (b.t_cmp + q / cfg.eta) / b.t_max >= 1.0
}
