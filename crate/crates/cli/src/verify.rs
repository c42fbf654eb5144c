//! Self-checks behind `hfl-sim verify`. Suites run on their own threads.

use hfl_sim::auction::{
    check_outcome, misreport_grid, run_auction, verify_ic, verify_ir, AuctionConfig, AuctionInstance, Bid, Capacities,
    GreedyRule, PaymentRule,
};
use hfl_sim::evogame::{replicator_rhs, GameParams, PopulationState};
use hfl_sim::migration::{decode, fast_nondominated_sort, Individual, OnlineQueue, Receiver, Roster, Task};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct SuiteResult {
    pub name: &'static str,
    pub ok: bool,
    pub detail: String,
}

type Suite = Box<dyn FnOnce() -> Result<String, String> + Send>;

pub fn run_all(instance: Option<&AuctionInstance>, cases: usize, seed: u64) -> Vec<SuiteResult> {
    let mut suites: Vec<(&'static str, Suite)> = vec![
        ("auction IR/IC on random instances", Box::new(move || random_auctions(cases, seed))),
        ("non-dominated sorting oracle", Box::new(move || sorting(cases, seed))),
        ("replicator tangency", Box::new(move || tangency(cases, seed))),
        ("migration decoder feasibility", Box::new(move || decoder(cases, seed))),
    ];
    if let Some(inst) = instance {
        let inst = inst.clone();
        suites.insert(0, ("auction IR/IC on the given instance", Box::new(move || given_instance(&inst))));
    }
    std::thread::scope(|s| {
        let handles: Vec<_> = suites
            .into_iter()
            .map(|(name, f)| (name, s.spawn(f)))
            .collect();
        handles
            .into_iter()
            .map(|(name, h)| {
                let r = h.join().unwrap_or_else(|_| Err("panicked".into()));
                SuiteResult {
                    name,
                    ok: r.is_ok(),
                    detail: r.unwrap_or_else(|e| e),
                }
            })
            .collect()
    })
}

fn audit(bids: &[Bid], cfg: &AuctionConfig, caps: &Capacities) -> Result<f64, String> {
    let out = run_auction(bids, cfg, caps).map_err(|e| e.to_string())?;
    let problems = check_outcome(&out, bids, cfg, caps);
    if !problems.is_empty() {
        return Err(problems.join("; "));
    }
    let ir = verify_ir(&out, bids);
    if !ir.is_ok() {
        return Err(format!("IR violated: {:?}", ir.violations));
    }
    let ic = verify_ic(bids, cfg, caps, &misreport_grid(50)).map_err(|e| e.to_string())?;
    if !ic.is_ok(1e-9) {
        return Err(format!("misreport gains {:e}", ic.max_gain));
    }
    Ok(ic.max_gain)
}

fn given_instance(inst: &AuctionInstance) -> Result<String, String> {
    let cfg = AuctionConfig {
        greedy: GreedyRule::Ratio,
        payment: PaymentRule::Threshold,
        ..inst.config.clone()
    };
    let gain = audit(&inst.bids, &cfg, &inst.capacities)?;
    Ok(format!("max misreport gain {gain:.1e}"))
}

/// Feasible instances with at least `k + 1` feasible stations.
fn random_auction(rng: &mut ChaCha8Rng) -> (Vec<Bid>, AuctionConfig, Capacities) {
    let n_bs: u64 = rng.gen_range(3..=10);
    let k = rng.gen_range(1..=3.min(n_bs as usize - 1));
    let cfg = AuctionConfig {
        k_min: k,
        t_g: 20,
        ..AuctionConfig::default()
    };
    let mut bids = Vec::new();
    for bs in 0..n_bs {
        for j in 0..rng.gen_range(1..=3u64) {
            let forced = bs as usize <= k && j == 0;
            let cost = rng.gen_range(1.0..100.0);
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
    let caps = (0..n_bs).map(|bs| (bs, rng.gen_range(1.0..3.0))).collect();
    (bids, cfg, caps)
}

fn random_auctions(cases: usize, seed: u64) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for i in 0..cases {
        let (bids, cfg, caps) = random_auction(&mut rng);
        worst = worst.max(audit(&bids, &cfg, &caps).map_err(|e| format!("instance {i}: {e}"))?);
    }
    Ok(format!("{cases} instances, max misreport gain {worst:.1e}"))
}

fn brute_fronts(objs: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let dom = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| x <= y) && a.iter().zip(b).any(|(x, y)| x < y);
    let mut left: Vec<usize> = (0..objs.len()).collect();
    let mut fronts = Vec::new();
    while !left.is_empty() {
        let front: Vec<usize> = left
            .iter()
            .copied()
            .filter(|&i| !left.iter().any(|&j| dom(&objs[j], &objs[i])))
            .collect();
        left.retain(|i| !front.contains(i));
        fronts.push(front);
    }
    fronts
}

fn sorting(cases: usize, seed: u64) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
    for i in 0..cases {
        let n = rng.gen_range(1..=100);
        let objs: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..2).map(|_| f64::from(rng.gen_range(0..20u32)) / 4.0).collect())
            .collect();
        let pop: Vec<Individual> = objs
            .iter()
            .map(|o| Individual {
                objectives: Some(o.clone()),
                ..Individual::new(Vec::new())
            })
            .collect();
        let fronts = fast_nondominated_sort(&pop).map_err(|e| e.to_string())?;
        if fronts != brute_fronts(&objs) {
            return Err(format!("population {i} disagrees with the brute-force fronts"));
        }
    }
    Ok(format!("{cases} populations match"))
}

fn tangency(cases: usize, seed: u64) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
    let mut worst = 0.0f64;
    for _ in 0..cases * 50 {
        let n = rng.gen_range(2..=3);
        let params = GameParams {
            rewards: (0..n).map(|_| rng.gen_range(600.0..900.0)).collect(),
            data_volume: (0..n).map(|_| rng.gen_range(0.5..2.0)).collect(),
            unit_cost: rng.gen_range(0.0..50.0),
            learning_rate: rng.gen_range(1e-4..1.0),
            cost_model: Default::default(),
        };
        let q: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..5.0)).collect();
        let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(1e-6..1.0)).collect();
        let x = PopulationState::normalized(&raw).map_err(|e| e.to_string())?;
        let dx = replicator_rhs(&x, &params, &q).map_err(|e| e.to_string())?;
        worst = worst.max(dx.iter().sum::<f64>().abs());
    }
    if worst > 1e-12 {
        return Err(format!("sum of dx reached {worst:e}"));
    }
    Ok(format!("{} states, max |sum dx| {worst:.1e}", cases * 50))
}

fn decoder(cases: usize, seed: u64) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 3);
    for i in 0..cases {
        let queue: OnlineQueue = (0..rng.gen_range(1..12u64))
            .map(|id| Task {
                id,
                origin_user: id,
                required_capacity: rng.gen_range(0.5..2.0),
                data_size: rng.gen_range(1.0..10.0),
                progress: rng.gen_range(0.0..1.0),
            })
            .collect();
        let receivers: Vec<Receiver> = (0..rng.gen_range(1..10u64))
            .map(|id| Receiver {
                id,
                capacity: rng.gen_range(0.3..4.0),
            })
            .collect();
        let genome: Vec<f64> = (0..queue.len()).map(|_| rng.gen()).collect();
        let plan = decode(&genome, &queue, &Roster::new(&queue, &receivers));
        if !plan.is_capacity_feasible(&queue, &receivers) {
            return Err(format!("instance {i}: decoded plan exceeds a receiver's capacity"));
        }
    }
    Ok(format!("{cases} decoded plans feasible"))
}
