//! Individual-rationality and incentive-compatibility checks.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::Serialize;

use super::{feasible, run_auction, AuctionConfig, AuctionError, AuctionOutcome, Bid, Capacities, PaymentRule};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IrViolation {
    pub bs: u64,
    pub utility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IrReport {
    /// Payment minus true cost for winners, 0 for losers.
    pub utilities: BTreeMap<u64, f64>,
    pub violations: Vec<IrViolation>,
}

impl IrReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

fn winning_bid(bids: &[Bid], bs: u64, schedule: u64) -> &Bid {
    bids.iter()
        .find(|b| b.bs_id == bs && b.schedule_id == schedule)
        .expect("winner comes from the bid set")
}

fn utility_of(outcome: &AuctionOutcome, bids: &[Bid], bs: u64) -> f64 {
    outcome
        .winners
        .iter()
        .find(|w| w.bs == bs)
        .map_or(0.0, |w| w.payment - winning_bid(bids, w.bs, w.schedule).true_cost)
}

pub fn verify_ir(outcome: &AuctionOutcome, bids: &[Bid]) -> IrReport {
    let utilities: BTreeMap<u64, f64> = bids
        .iter()
        .map(|b| b.bs_id)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .map(|bs| (bs, utility_of(outcome, bids, bs)))
        .collect();
    let violations = utilities
        .iter()
        .filter(|(_, &u)| u < 0.0)
        .map(|(&bs, &utility)| IrViolation { bs, utility })
        .collect();
    IrReport { utilities, violations }
}

/// `points` misreport factors spread evenly over `[0.1, 3]`.
pub fn misreport_grid(points: usize) -> Vec<f64> {
    match points {
        0 => vec![],
        1 => vec![1.0],
        _ => (0..points)
            .map(|i| 0.1 + 2.9 * i as f64 / (points - 1) as f64)
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IcBidder {
    pub bs: u64,
    pub truthful_utility: f64,
    /// Best utility gain over truthful bidding across the grid.
    pub max_gain: f64,
    /// Misreport factor achieving `max_gain`.
    pub best_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IcReport {
    pub bidders: Vec<IcBidder>,
    pub max_gain: f64,
}

impl IcReport {
    pub fn is_ok(&self, tol: f64) -> bool {
        self.max_gain <= tol
    }
}

pub const MIN_GRID_POINTS: usize = 50;

/// Re-runs the auction for every unilateral misreport: base station `b`
/// scales all of its prices to `factor * true_cost` while everyone else bids
/// truthfully.
pub fn verify_ic(bids: &[Bid], cfg: &AuctionConfig, caps: &Capacities, grid: &[f64]) -> Result<IcReport, AuctionError> {
    if grid.len() < MIN_GRID_POINTS {
        return Err(AuctionError::GridTooSmall {
            need: MIN_GRID_POINTS,
            have: grid.len(),
        });
    }
    let truthful: Vec<Bid> = bids
        .iter()
        .map(|b| Bid {
            price: b.true_cost,
            ..b.clone()
        })
        .collect();
    let base = run_auction(&truthful, cfg, caps)?;
    let stations: Vec<u64> = truthful.iter().map(|b| b.bs_id).collect::<BTreeSet<_>>().into_iter().collect();

    let bidders = stations
        .par_iter()
        .map(|&bs| {
            let honest = utility_of(&base, &truthful, bs);
            let mut best = (f64::NEG_INFINITY, 1.0);
            for &f in grid {
                let lied: Vec<Bid> = truthful
                    .iter()
                    .map(|b| {
                        if b.bs_id == bs {
                            Bid {
                                price: f * b.true_cost,
                                ..b.clone()
                            }
                        } else {
                            b.clone()
                        }
                    })
                    .collect();
                let out = run_auction(&lied, cfg, caps)?;
                let gain = utility_of(&out, &lied, bs) - honest;
                if gain > best.0 {
                    best = (gain, f);
                }
            }
            Ok(IcBidder {
                bs,
                truthful_utility: honest,
                max_gain: best.0,
                best_factor: best.1,
            })
        })
        .collect::<Result<Vec<_>, AuctionError>>()?;
    let max_gain = bidders.iter().map(|b| b.max_gain).fold(f64::NEG_INFINITY, f64::max);
    Ok(IcReport { bidders, max_gain })
}

/// Lists every allocation constraint an outcome breaks.
pub fn check_outcome(outcome: &AuctionOutcome, bids: &[Bid], cfg: &AuctionConfig, caps: &Capacities) -> Vec<String> {
    let mut errs = Vec::new();
    if outcome.winners.len() < cfg.k_min {
        errs.push(format!("{} winners, need {}", outcome.winners.len(), cfg.k_min));
    }
    let mut per_bs: BTreeMap<u64, usize> = BTreeMap::new();
    for (b, &x) in bids.iter().zip(&outcome.bid_selected) {
        if x {
            *per_bs.entry(b.bs_id).or_default() += 1;
            if !matches!(feasible(b, cfg, caps.get(&b.bs_id).copied().unwrap_or(0.0)), Ok(true)) {
                errs.push(format!("infeasible bid selected for base station {}", b.bs_id));
            }
        }
    }
    for (bs, n) in &per_bs {
        if *n > 1 {
            errs.push(format!("base station {bs} selected {n} times"));
        }
    }
    for (bs, &y) in &outcome.selection {
        if y != per_bs.contains_key(bs) {
            errs.push(format!("selection flag of base station {bs} disagrees with bid flags"));
        }
    }
    let total: f64 = outcome.winners.iter().map(|w| w.payment).sum();
    if total != outcome.total_payment {
        errs.push(format!("total payment {} != sum {}", outcome.total_payment, total));
    }
    if cfg.payment == PaymentRule::Threshold {
        for w in &outcome.winners {
            let price = winning_bid(bids, w.bs, w.schedule).price;
            if w.payment < price {
                errs.push(format!("base station {} paid {} below its price {}", w.bs, w.payment, price));
            }
        }
    }
    errs
}
