//! Reverse auction in which the cloud server buys training rounds from base
//! stations.
//!
//! Each base station submits one bid per schedule. A bid is feasible when the
//! global iteration budget covers its accuracy (`T_g >= 1 / (1 - accuracy)`)
//! and its time ratio `(t_cmp + q / eta) / t_max` is at least one. The
//! auctioneer greedily takes the cheapest feasible bid per unit of quality,
//! one per base station, until `k_min` stations are selected, then pays every
//! winner the threshold price implied by the best losing bid.
//!
//! ```
//! use hfl_sim::auction::{run_auction, AuctionConfig, Bid, Capacities};
//!
//! let bids = vec![
//!     Bid::simple(1, 3.0, 1.0),
//!     Bid::simple(2, 5.0, 1.0),
//!     Bid::simple(3, 7.0, 1.0),
//! ];
//! let cfg = AuctionConfig { k_min: 2, ..AuctionConfig::default() };
//! let out = run_auction(&bids, &cfg, &Capacities::new()).unwrap();
//! assert_eq!(out.winner_ids(), vec![1, 2]);
//! assert_eq!(out.total_payment, 14.0);
//! ```

mod io;
mod verify;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{AuctionInstance, InstanceError};
pub use verify::{check_outcome, misreport_grid, verify_ic, verify_ir, IcBidder, IcReport, IrReport, IrViolation};

/// Uplink capacity per base station; stations not listed have capacity 0.
pub type Capacities = BTreeMap<u64, f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AuctionError {
    #[error("invalid auction config: {0}")]
    InvalidConfig(String),
    #[error("invalid bid from base station {bs} (schedule {schedule}): {reason}")]
    InvalidBid { bs: u64, schedule: u64, reason: String },
    #[error("accuracy 1 makes the iteration bound infinite (base station {bs}, schedule {schedule})")]
    PerfectAccuracy { bs: u64, schedule: u64 },
    #[error("unsatisfiable: {need} base stations required but only {have} have a feasible bid (short by {})", need - have)]
    Unsatisfiable { need: usize, have: usize },
    #[error("no critical bid: every feasible bid belongs to a winner")]
    NoCriticalBid,
    #[error("misreport grid needs at least {need} points, got {have}")]
    GridTooSmall { need: usize, have: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bid {
    #[serde(rename = "bs")]
    pub bs_id: u64,
    #[serde(rename = "schedule")]
    pub schedule_id: u64,
    /// Claimed cost in reward units.
    pub price: f64,
    pub accuracy: f64,
    /// Utility increment delivered if selected.
    pub quality: f64,
    pub t_cmp: f64,
    pub t_max: f64,
    /// Hidden valuation, only read by the verifiers.
    pub true_cost: f64,
}

#[derive(Deserialize)]
struct BidRecord {
    bs: u64,
    #[serde(default)]
    schedule: u64,
    price: f64,
    accuracy: f64,
    quality: Option<f64>,
    t_cmp: f64,
    t_max: f64,
    true_cost: Option<f64>,
}

impl<'de> Deserialize<'de> for Bid {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = BidRecord::deserialize(d)?;
        Ok(Bid {
            bs_id: r.bs,
            schedule_id: r.schedule,
            price: r.price,
            accuracy: r.accuracy,
            quality: r.quality.unwrap_or(r.accuracy),
            t_cmp: r.t_cmp,
            t_max: r.t_max,
            true_cost: r.true_cost.unwrap_or(r.price),
        })
    }
}

impl Bid {
    /// A truthful bid with accuracy 0.5 and unit time ratio.
    pub fn simple(bs_id: u64, price: f64, quality: f64) -> Self {
        Self {
            bs_id,
            schedule_id: 0,
            price,
            accuracy: 0.5,
            quality,
            t_cmp: 1.0,
            t_max: 1.0,
            true_cost: price,
        }
    }

    pub fn validate(&self) -> Result<(), AuctionError> {
        let reason = if !(self.price > 0.0) || !self.price.is_finite() {
            "price must be positive"
        } else if !(0.0..=1.0).contains(&self.accuracy) {
            "accuracy must lie in [0, 1)"
        } else if !(self.quality > 0.0) || !self.quality.is_finite() {
            "quality must be positive"
        } else if !(self.t_cmp > 0.0 && self.t_max > 0.0) {
            "t_cmp and t_max must be positive"
        } else {
            return Ok(());
        };
        Err(AuctionError::InvalidBid {
            bs: self.bs_id,
            schedule: self.schedule_id,
            reason: reason.into(),
        })
    }

    pub fn ratio(&self) -> f64 {
        self.price / self.quality
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GreedyRule {
    /// Lowest price per unit quality first.
    #[default]
    Ratio,
    /// Lowest raw price first.
    Price,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PaymentRule {
    /// Largest price at which the winner would still have been selected.
    #[default]
    Threshold,
    /// `R_w - (r_c / R_c) * R_w`. Can go negative.
    Literal,
    PayAsBid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AuctionConfig {
    pub k_min: usize,
    pub t_g: u32,
    pub eta: f64,
    pub greedy: GreedyRule,
    pub payment: PaymentRule,
    /// Winner payment as a multiple of its price when no losing bid exists.
    pub reserve_ratio: f64,
}

impl Default for AuctionConfig {
    fn default() -> Self {
        Self {
            k_min: 1,
            t_g: 50,
            eta: 1.0,
            greedy: GreedyRule::Ratio,
            payment: PaymentRule::Threshold,
            reserve_ratio: 1.5,
        }
    }
}

impl AuctionConfig {
    pub fn validate(&self) -> Result<(), AuctionError> {
        let bad = |m: &str| Err(AuctionError::InvalidConfig(m.into()));
        if self.k_min < 1 {
            return bad("k_min must be >= 1");
        }
        if self.t_g < 1 {
            return bad("t_g must be >= 1");
        }
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return bad("eta must be positive");
        }
        if !(self.reserve_ratio >= 1.0) || !self.reserve_ratio.is_finite() {
            return bad("reserve_ratio must be >= 1");
        }
        Ok(())
    }

    /// Total order used by selection and by the critical bid.
    pub fn compare(&self, a: &Bid, b: &Bid) -> Ordering {
        let primary = match self.greedy {
            GreedyRule::Ratio => a.ratio().total_cmp(&b.ratio()),
            GreedyRule::Price => Ordering::Equal,
        };
        primary
            .then(a.price.total_cmp(&b.price))
            .then(a.bs_id.cmp(&b.bs_id))
            .then(a.schedule_id.cmp(&b.schedule_id))
    }
}

const ITER_BOUND_RTOL: f64 = 1e-12;

/// Whether a bid satisfies the iteration and time constraints at uplink
/// capacity `q`.
pub fn feasible(bid: &Bid, cfg: &AuctionConfig, q: f64) -> Result<bool, AuctionError> {
    if bid.accuracy >= 1.0 {
        return Err(AuctionError::PerfectAccuracy {
            bs: bid.bs_id,
            schedule: bid.schedule_id,
        });
    }
    // 1 - 0.9 rounds below 0.1; keep decimal boundaries such as T_g = 10 feasible
    let iterations = f64::from(cfg.t_g) >= (1.0 - ITER_BOUND_RTOL) / (1.0 - bid.accuracy);
    let time = (bid.t_cmp + q / cfg.eta) / bid.t_max >= 1.0;
    Ok(iterations && time)
}

fn feasible_set(bids: &[Bid], cfg: &AuctionConfig, caps: &Capacities) -> Result<Vec<bool>, AuctionError> {
    cfg.validate()?;
    bids.iter()
        .map(|b| {
            b.validate()?;
            feasible(b, cfg, caps.get(&b.bs_id).copied().unwrap_or(0.0))
        })
        .collect()
}

fn select(bids: &[Bid], ok: &[bool], cfg: &AuctionConfig) -> Result<Vec<usize>, AuctionError> {
    let have = bids
        .iter()
        .zip(ok)
        .filter(|(_, &f)| f)
        .map(|(b, _)| b.bs_id)
        .collect::<BTreeSet<_>>()
        .len();
    if have < cfg.k_min {
        return Err(AuctionError::Unsatisfiable { need: cfg.k_min, have });
    }
    let mut taken = BTreeSet::new();
    let mut winners = Vec::with_capacity(cfg.k_min);
    while winners.len() < cfg.k_min {
        let best = (0..bids.len())
            .filter(|&i| ok[i] && !taken.contains(&bids[i].bs_id))
            .min_by(|&i, &j| cfg.compare(&bids[i], &bids[j]))
            .expect("enough feasible stations");
        taken.insert(bids[best].bs_id);
        winners.push(best);
    }
    Ok(winners)
}

/// Indices of the winning bids in selection order.
pub fn greedy_select(bids: &[Bid], cfg: &AuctionConfig, caps: &Capacities) -> Result<Vec<usize>, AuctionError> {
    let ok = feasible_set(bids, cfg, caps)?;
    select(bids, &ok, cfg)
}

fn critical(bids: &[Bid], ok: &[bool], winners: &[usize], cfg: &AuctionConfig) -> Option<usize> {
    let won: BTreeSet<u64> = winners.iter().map(|&i| bids[i].bs_id).collect();
    (0..bids.len())
        .filter(|&i| ok[i] && !won.contains(&bids[i].bs_id))
        .min_by(|&i, &j| cfg.compare(&bids[i], &bids[j]))
}

/// Best feasible bid from a base station that did not win.
pub fn critical_bid(
    bids: &[Bid],
    winners: &[usize],
    cfg: &AuctionConfig,
    caps: &Capacities,
) -> Result<usize, AuctionError> {
    let ok = feasible_set(bids, cfg, caps)?;
    critical(bids, &ok, winners, cfg).ok_or(AuctionError::NoCriticalBid)
}

/// Payment to `winner` given the critical bid, or the reserve payment when
/// there is none.
pub fn payment(winner: &Bid, critical: Option<&Bid>, cfg: &AuctionConfig) -> f64 {
    let Some(c) = critical else {
        return match cfg.payment {
            PaymentRule::PayAsBid => winner.price,
            _ => cfg.reserve_ratio * winner.price,
        };
    };
    match cfg.payment {
        PaymentRule::Threshold => {
            let threshold = match cfg.greedy {
                GreedyRule::Ratio => c.ratio() * winner.quality,
                GreedyRule::Price => c.price,
            };
            // equal to the threshold in exact arithmetic; guards a 1-ulp dip
            threshold.max(winner.price)
        }
        PaymentRule::Literal => winner.quality - c.ratio() * winner.quality,
        PaymentRule::PayAsBid => winner.price,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Winner {
    pub bs: u64,
    pub schedule: u64,
    pub payment: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalRef {
    pub bs: u64,
    pub schedule: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuctionOutcome {
    /// Winners in selection order.
    pub winners: Vec<Winner>,
    /// `y` per base station present in the bid set.
    pub selection: BTreeMap<u64, bool>,
    /// `x` per bid, aligned with the input.
    pub bid_selected: Vec<bool>,
    pub payments: BTreeMap<u64, f64>,
    pub total_payment: f64,
    pub critical_bid: Option<CriticalRef>,
    pub reserve_used: bool,
}

impl AuctionOutcome {
    pub fn winner_ids(&self) -> Vec<u64> {
        self.winners.iter().map(|w| w.bs).collect()
    }

    pub fn payment_of(&self, bs: u64) -> Option<f64> {
        self.payments.get(&bs).copied()
    }
}

/// Feasibility filter, greedy selection, critical bid and payments.
pub fn run_auction(bids: &[Bid], cfg: &AuctionConfig, caps: &Capacities) -> Result<AuctionOutcome, AuctionError> {
    let ok = feasible_set(bids, cfg, caps)?;
    let winners = select(bids, &ok, cfg)?;
    let crit = critical(bids, &ok, &winners, cfg);
    let mut bid_selected = vec![false; bids.len()];
    let mut selection: BTreeMap<u64, bool> = bids.iter().map(|b| (b.bs_id, false)).collect();
    let mut payments = BTreeMap::new();
    let mut list = Vec::with_capacity(winners.len());
    for &w in &winners {
        let bid = &bids[w];
        let p = payment(bid, crit.map(|c| &bids[c]), cfg);
        bid_selected[w] = true;
        selection.insert(bid.bs_id, true);
        payments.insert(bid.bs_id, p);
        list.push(Winner {
            bs: bid.bs_id,
            schedule: bid.schedule_id,
            payment: p,
        });
    }
    Ok(AuctionOutcome {
        total_payment: list.iter().map(|w| w.payment).sum(),
        winners: list,
        selection,
        bid_selected,
        payments,
        critical_bid: crit.map(|c| CriticalRef {
            bs: bids[c].bs_id,
            schedule: bids[c].schedule_id,
        }),
        reserve_used: crit.is_none(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn abc() -> Vec<Bid> {
        vec![Bid::simple(1, 3.0, 1.0), Bid::simple(2, 5.0, 1.0), Bid::simple(3, 7.0, 1.0)]
    }

    fn k(k_min: usize) -> AuctionConfig {
        AuctionConfig {
            k_min,
            ..AuctionConfig::default()
        }
    }

    #[test]
    fn feasibility_boundaries() {
        let cfg = AuctionConfig {
            t_g: 2,
            ..k(1)
        };
        let mut b = Bid::simple(1, 1.0, 1.0);
        assert!(feasible(&b, &cfg, 0.0).unwrap());
        b.accuracy = 0.9;
        assert!(!feasible(&b, &AuctionConfig { t_g: 5, ..cfg.clone() }, 0.0).unwrap());
        assert!(feasible(&b, &AuctionConfig { t_g: 10, ..cfg.clone() }, 0.0).unwrap());
        b.accuracy = 1.0;
        assert!(matches!(feasible(&b, &cfg, 0.0), Err(AuctionError::PerfectAccuracy { .. })));

        let b = Bid {
            t_cmp: 1.0,
            t_max: 3.0,
            ..Bid::simple(1, 1.0, 1.0)
        };
        assert!(feasible(&b, &cfg, 2.0).unwrap());
        assert!(!feasible(&b, &cfg, 1.999).unwrap());
    }

    #[test]
    fn greedy_examples() {
        let caps = Capacities::new();
        assert_eq!(greedy_select(&abc(), &k(2), &caps).unwrap(), vec![0, 1]);
        assert_eq!(greedy_select(&abc(), &k(3), &caps).unwrap(), vec![0, 1, 2]);
        let bids = vec![Bid::simple(1, 4.0, 2.0), Bid::simple(2, 3.0, 1.0)];
        assert_eq!(greedy_select(&bids, &k(1), &caps).unwrap(), vec![0]);
        let by_price = AuctionConfig {
            greedy: GreedyRule::Price,
            ..k(1)
        };
        assert_eq!(greedy_select(&bids, &by_price, &caps).unwrap(), vec![1]);
    }

    #[test]
    fn ties_break_on_price_then_id() {
        let bids = vec![Bid::simple(5, 4.0, 2.0), Bid::simple(2, 2.0, 1.0), Bid::simple(1, 2.0, 1.0)];
        assert_eq!(greedy_select(&bids, &k(3), &Capacities::new()).unwrap(), vec![2, 1, 0]);
    }

    #[test]
    fn one_bid_per_station() {
        let mut bids = abc();
        bids.push(Bid {
            schedule_id: 1,
            ..Bid::simple(1, 3.5, 1.0)
        });
        let out = run_auction(&bids, &k(2), &Capacities::new()).unwrap();
        assert_eq!(out.winner_ids(), vec![1, 2]);
        assert_eq!(out.bid_selected, vec![true, true, false, false]);
    }

    #[test]
    fn unsatisfiable_names_shortfall() {
        let err = greedy_select(&abc(), &k(5), &Capacities::new()).unwrap_err();
        assert_eq!(err, AuctionError::Unsatisfiable { need: 5, have: 3 });
        assert!(err.to_string().contains("short by 2"));
    }

    #[test]
    fn critical_bid_examples() {
        let caps = Capacities::new();
        let bids = vec![Bid::simple(1, 3.0, 1.0), Bid::simple(3, 7.0, 1.0), Bid::simple(4, 6.0, 1.0)];
        assert_eq!(critical_bid(&bids[..2], &[0], &k(1), &caps).unwrap(), 1);
        assert_eq!(critical_bid(&bids, &[0], &k(1), &caps).unwrap(), 2);
        let bids = vec![Bid::simple(1, 3.0, 1.0), Bid::simple(3, 8.0, 2.0), Bid::simple(4, 5.0, 1.0)];
        assert_eq!(critical_bid(&bids, &[0], &k(1), &caps).unwrap(), 1);
        assert_eq!(critical_bid(&bids[..1], &[0], &k(1), &caps), Err(AuctionError::NoCriticalBid));
    }

    #[test]
    fn payment_examples() {
        let a = Bid::simple(1, 3.0, 1.0);
        let c = Bid::simple(3, 7.0, 1.0);
        assert_eq!(payment(&a, Some(&c), &k(1)), 7.0);
        assert_eq!(payment(&c, Some(&c), &k(1)), 7.0);
        let literal = AuctionConfig {
            payment: PaymentRule::Literal,
            ..k(1)
        };
        assert_eq!(payment(&a, Some(&c), &literal), -6.0);
        assert_eq!(payment(&a, None, &k(1)), 4.5);
    }

    #[test]
    fn abc_outcome() {
        let out = run_auction(&abc(), &k(2), &Capacities::new()).unwrap();
        assert_eq!(out.winner_ids(), vec![1, 2]);
        assert_eq!(out.payment_of(1), Some(7.0));
        assert_eq!(out.payment_of(2), Some(7.0));
        assert_eq!(out.total_payment, 14.0);
        assert_eq!(out.critical_bid, Some(CriticalRef { bs: 3, schedule: 0 }));
        assert_eq!(out.selection.get(&3), Some(&false));
    }

    #[test]
    fn single_bid_uses_reserve() {
        let out = run_auction(&abc()[..1], &k(1), &Capacities::new()).unwrap();
        assert!(out.reserve_used);
        assert_eq!(out.total_payment, 4.5);
    }

    #[test]
    fn infeasible_bids_are_ignored() {
        let mut bids = abc();
        bids[0].accuracy = 0.99;
        let cfg = AuctionConfig { t_g: 10, ..k(1) };
        let out = run_auction(&bids, &cfg, &Capacities::new()).unwrap();
        assert_eq!(out.winner_ids(), vec![2]);
        assert_eq!(out.total_payment, 7.0);
    }
}
