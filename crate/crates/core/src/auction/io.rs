use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{run_auction, AuctionConfig, AuctionError, AuctionOutcome, Bid, Capacities};

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("malformed auction instance: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error("unknown keys in auction instance: {}", .0.join(", "))]
    UnknownKeys(Vec<String>),
}

/// A complete auction as exchanged in JSON files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuctionInstance {
    pub bids: Vec<Bid>,
    pub config: AuctionConfig,
    #[serde(default)]
    pub capacities: Capacities,
}

impl AuctionInstance {
    /// Parses an instance, rejecting unknown keys anywhere in the document.
    pub fn from_json(text: &str) -> Result<Self, InstanceError> {
        let mut unknown = Vec::new();
        let de = &mut serde_json::Deserializer::from_str(text);
        let inst: Self = serde_ignored::deserialize(de, |path| unknown.push(path.to_string()))?;
        if !unknown.is_empty() {
            return Err(InstanceError::UnknownKeys(unknown));
        }
        Ok(inst)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance is serializable")
    }

    pub fn run(&self) -> Result<AuctionOutcome, AuctionError> {
        run_auction(&self.bids, &self.config, &self.capacities)
    }
}
