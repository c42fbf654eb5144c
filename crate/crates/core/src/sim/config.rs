//! Simulation configuration and its TOML form.
//!
//! Every key is optional; an empty file yields the defaults below. Unknown keys
//! are reported with their full dotted path.
//!
//! ```toml
//! n_servers = 10
//! n_regions = 3
//! n_users = 100
//! congestion_coeff = 10.0
//! reward_range = [600.0, 900.0]
//! rounds = 50
//! seed = 0
//! p_move = 0.05
//!
//! [evogame]
//! unit_cost = 20.0
//! learning_rate = 1e-4
//!
//! [auction]
//! k_min = 1
//! t_g = 50
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::auction::AuctionConfig;
use crate::channel::{ChannelParams, CompressionSpec, PrivacySpec};
use crate::migration::GaParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Syntax(String),
    #[error("unknown config keys: {}", .0.join(", "))]
    UnknownKeys(Vec<String>),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvoBlock {
    /// Per-unit training cost `xi`.
    pub unit_cost: f64,
    /// Adaptation rate `Delta`.
    pub learning_rate: f64,
    pub dt: f64,
    /// Game time integrated per round.
    pub window: f64,
}

impl Default for EvoBlock {
    fn default() -> Self {
        Self {
            unit_cost: 20.0,
            learning_rate: 1e-4,
            dt: 0.01,
            window: 10.0,
        }
    }
}

impl EvoBlock {
    pub fn steps_per_round(&self) -> usize {
        (self.window / self.dt).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MigrationBlock {
    pub ga: GaParams,
    /// Capacity (bits/s/Hz) a receiver must reserve for one task.
    pub task_capacity: f64,
    /// Rounds a task may wait in the queue before it is dropped.
    pub queue_max_age: usize,
}

impl Default for MigrationBlock {
    fn default() -> Self {
        Self {
            ga: GaParams {
                pop_size: 40,
                generations: 40,
                ..GaParams::default()
            },
            task_capacity: 1.0,
            queue_max_age: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BidBlock {
    /// Price per unit of regional communication overhead.
    pub cost_per_overhead: f64,
    /// Half-width of the multiplicative price noise.
    pub price_noise: f64,
    /// Base computation time; each server scales it by `U[1, 1 + t_cmp_spread]`.
    pub t_cmp: f64,
    pub t_cmp_spread: f64,
    pub t_max: f64,
}

impl Default for BidBlock {
    fn default() -> Self {
        Self {
            cost_per_overhead: 10.0,
            price_noise: 0.1,
            t_cmp: 1.0,
            t_cmp_spread: 0.5,
            t_max: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AccuracyModel {
    /// Asymptotic accuracy, strictly below 1.
    pub a_max: f64,
    /// Learning speed per sample per round.
    pub kappa: f64,
    /// Multiplicative loss per unit interruption rate.
    pub interruption_penalty: f64,
}

impl Default for AccuracyModel {
    fn default() -> Self {
        Self {
            a_max: 0.99,
            kappa: 1.6e-6,
            interruption_penalty: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n_servers: usize,
    pub n_regions: usize,
    pub n_users: usize,
    /// Multiplier on `p_move` for users of regions above mean load.
    pub congestion_coeff: f64,
    pub reward_range: [f64; 2],
    /// `false` zeroes every announced reward and every payout.
    pub rewards_enabled: bool,
    /// Momentum range of the local optimizer; recorded only.
    pub momentum: [f64; 2],
    pub rounds: usize,
    pub seed: u64,
    pub p_move: f64,
    /// Per-user sample count is drawn from this range.
    pub data_volume_range: [f64; 2],
    /// Upload size of one local model before compression.
    pub model_size: f64,
    pub evogame: EvoBlock,
    pub migration: MigrationBlock,
    pub auction: AuctionConfig,
    pub bids: BidBlock,
    pub accuracy: AccuracyModel,
    pub channel: ChannelParams,
    pub privacy: PrivacySpec,
    pub compression: CompressionSpec,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_servers: 10,
            n_regions: 3,
            n_users: 100,
            congestion_coeff: 10.0,
            reward_range: [600.0, 900.0],
            rewards_enabled: true,
            momentum: [0.0, 0.9],
            rounds: 50,
            seed: 0,
            p_move: 0.05,
            data_volume_range: [200.0, 800.0],
            model_size: 1.0,
            evogame: EvoBlock::default(),
            migration: MigrationBlock::default(),
            auction: AuctionConfig::default(),
            bids: BidBlock::default(),
            accuracy: AccuracyModel::default(),
            channel: ChannelParams::default(),
            privacy: PrivacySpec::default(),
            compression: CompressionSpec::default(),
        }
    }
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::Invalid(msg()))
    }
}

fn positive(v: f64) -> bool {
    v > 0.0 && v.is_finite()
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        check(self.n_servers >= 1, || "n_servers must be >= 1".into())?;
        check((2..=3).contains(&self.n_regions), || {
            format!("n_regions = {} outside [2, 3]", self.n_regions)
        })?;
        check((50..=300).contains(&self.n_users), || {
            format!("n_users = {} outside [50, 300]", self.n_users)
        })?;
        check(self.congestion_coeff >= 1.0 && self.congestion_coeff.is_finite(), || {
            "congestion_coeff must be >= 1".into()
        })?;
        let [lo, hi] = self.reward_range;
        check(lo >= 0.0 && lo <= hi && hi.is_finite(), || {
            format!("reward_range [{lo}, {hi}] must be ordered and non-negative")
        })?;
        let [m_lo, m_hi] = self.momentum;
        check((0.0..1.0).contains(&m_lo) && (m_lo..1.0).contains(&m_hi), || {
            "momentum must be an ordered range inside [0, 1)".into()
        })?;
        check((0.0..=1.0).contains(&self.p_move), || format!("p_move = {} outside [0, 1]", self.p_move))?;
        let [d_lo, d_hi] = self.data_volume_range;
        check(positive(d_lo) && d_lo <= d_hi && d_hi.is_finite(), || {
            "data_volume_range must be ordered and positive".into()
        })?;
        check(positive(self.model_size), || "model_size must be positive".into())?;

        let e = &self.evogame;
        check(e.unit_cost >= 0.0 && e.unit_cost.is_finite(), || "evogame.unit_cost must be >= 0".into())?;
        check(e.learning_rate >= 0.0 && e.learning_rate.is_finite(), || {
            "evogame.learning_rate must be >= 0".into()
        })?;
        check(positive(e.dt) && positive(e.window), || "evogame.dt and evogame.window must be positive".into())?;

        let m = &self.migration;
        m.ga.validate().map_err(|e| ConfigError::Invalid(format!("migration.ga: {e}")))?;
        check(positive(m.task_capacity), || "migration.task_capacity must be positive".into())?;

        self.auction
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("auction: {e}")))?;

        let b = &self.bids;
        check(positive(b.cost_per_overhead), || "bids.cost_per_overhead must be positive".into())?;
        check((0.0..1.0).contains(&b.price_noise), || "bids.price_noise must lie in [0, 1)".into())?;
        check(positive(b.t_cmp) && positive(b.t_max), || "bids.t_cmp and bids.t_max must be positive".into())?;
        check(b.t_cmp_spread >= 0.0 && b.t_cmp_spread.is_finite(), || "bids.t_cmp_spread must be >= 0".into())?;

        let a = &self.accuracy;
        check(a.a_max > 0.0 && a.a_max < 1.0, || "accuracy.a_max must lie in (0, 1)".into())?;
        check(a.kappa >= 0.0 && a.kappa.is_finite(), || "accuracy.kappa must be >= 0".into())?;
        check((0.0..=1.0).contains(&a.interruption_penalty), || {
            "accuracy.interruption_penalty must lie in [0, 1]".into()
        })?;

        self.channel
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("channel: {e}")))?;
        check(self.privacy.sigma_p2 >= 0.0, || "privacy.sigma_p2 must be >= 0".into())?;
        self.compression
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("compression: {e}")))?;
        Ok(())
    }

    /// Parses TOML, fills defaults, rejects unknown keys and checks every
    /// invariant.
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let de = toml::Deserializer::new(text);
        let mut unknown = Vec::new();
        let cfg: SimConfig = serde_ignored::deserialize(de, |path| unknown.push(path.to_string()))
            .map_err(|e| ConfigError::Syntax(e.to_string()))?;
        if !unknown.is_empty() {
            return Err(ConfigError::UnknownKeys(unknown));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is representable as TOML")
    }
}

/// Reads and validates a config file.
pub fn parse_config(path: &Path) -> Result<SimConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    SimConfig::from_toml_str(&text)
}
