use std::fs;
use std::path::Path;
use std::time::Instant;

use hfl_sim::sim::SimConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::Failure;

pub const FILE_NAME: &str = "manifest.json";

/// Record of one invocation. Written before any output file and rewritten
/// with the wall-clock time once the outputs are complete.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config: SimConfig,
    #[serde(default)]
    pub args: Value,
    pub out_dir: String,
    pub outputs: Vec<String>,
    /// Output schema versions, keyed by output kind.
    pub schemas: Value,
    pub wall_clock_seconds: Option<f64>,
}

impl RunManifest {
    pub fn new(command: &str, cfg: &SimConfig, out: &Path, outputs: &[&str]) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed: cfg.seed,
            config: cfg.clone(),
            args: Value::Null,
            out_dir: out.display().to_string(),
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
            schemas: serde_json::json!({ "metrics": 1, "trajectory": 1, "migration_plan": 1, "auction_outcome": 1 }),
            wall_clock_seconds: None,
        }
    }

    pub fn write(&self, out: &Path) -> Result<(), Failure> {
        fs::create_dir_all(out).map_err(|e| Failure::Runtime(format!("{}: {e}", out.display())))?;
        let path = out.join(FILE_NAME);
        let text = serde_json::to_string_pretty(self).expect("manifest is serializable");
        fs::write(&path, text + "\n").map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
    }

    pub fn finish(&mut self, out: &Path, started: Instant) -> Result<(), Failure> {
        self.wall_clock_seconds = Some(started.elapsed().as_secs_f64());
        self.write(out)
    }

    /// Config snapshot of a previous `simulate` run.
    pub fn load_config(path: &Path) -> Result<SimConfig, Failure> {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::Missing(format!("cannot read manifest {}: {e}", path.display())))?;
        let m: RunManifest =
            serde_json::from_str(&text).map_err(|e| Failure::Malformed(format!("manifest {}: {e}", path.display())))?;
        m.config.validate()?;
        Ok(m.config)
    }
}
