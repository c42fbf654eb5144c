//! Discrete-round simulator for incentive-driven hierarchical federated
//! learning with mobile users.
//!
//! Modules map onto the round loop:
//!
//! - [`channel`]: block-fading uplink capacity, privacy noise, compression.
//! - [`evogame`]: replicator dynamics for region choice.
//! - [`migration`]: NSGA-II reassignment of interrupted tasks.
//! - [`auction`]: greedy reverse auction with threshold payments, plus
//!   IR/IC checkers.
//! - [`sim`]: config, round orchestration and metrics.
//!
//! ```
//! use hfl_sim::sim::{simulate, SimConfig};
//!
//! let run = simulate(&SimConfig { rounds: 2, ..SimConfig::default() }).unwrap();
//! assert_eq!(run.metrics.len(), 2);
//! ```
//!
//! The guide in `book/` walks through each module; its code blocks run as
//! doctests.

pub mod auction;
pub mod channel;
pub mod evogame;
pub mod migration;
pub mod sim;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/overview.md")]
    mod overview {}
    #[doc = include_str!("../../../book/src/channel.md")]
    mod channel {}
    #[doc = include_str!("../../../book/src/evogame.md")]
    mod evogame {}
    #[doc = include_str!("../../../book/src/migration.md")]
    mod migration {}
    #[doc = include_str!("../../../book/src/auction.md")]
    mod auction {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
}
