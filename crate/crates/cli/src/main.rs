mod manifest;
mod verify;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use hfl_sim::auction::{AuctionInstance, InstanceError as AuctionInstanceError};
use hfl_sim::channel::capacity_from_snr;
use hfl_sim::evogame::{detect_equilibrium, integrate, sup_norm, GameParams, PopulationState};
use hfl_sim::migration::{run_migration, write_generation_csv, InstanceError as MigrationInstanceError, MigrationInstance};
use hfl_sim::sim::{parse_config, simulate, write_metrics_csv, write_metrics_jsonl, ConfigError, SimConfig, SimError};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use manifest::RunManifest;

#[derive(Parser, Debug)]
#[command(name = "hfl-sim", version, about = "Hierarchical federated learning simulator with mobile users")]
struct Cli {
    /// TOML config; built-in defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    rounds: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, env = "HFL_SIM_OUT", default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Jsonl)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Jsonl,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the full round loop and write per-round metrics.
    Simulate {
        /// Replay the config and seed recorded in a previous manifest.
        #[arg(long, conflicts_with_all = ["config", "seed", "rounds"])]
        from_manifest: Option<PathBuf>,
    },
    /// Integrate the replicator dynamics from `--x0` and write the trajectory.
    Evogame {
        /// Initial proportions, comma separated; rescaled to sum 1.
        #[arg(long, value_delimiter = ',', required = true)]
        x0: Vec<f64>,
        /// Integration horizon in time units.
        #[arg(long, default_value_t = 500.0)]
        horizon: f64,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
    },
    /// Reassign queued tasks for a JSON migration instance.
    Migrate { instance: PathBuf },
    /// Run the procurement auction on a JSON instance.
    Auction { instance: PathBuf },
    /// Check IR/IC and the oracle suites; exits 4 on any violation.
    Verify {
        /// Also check this auction instance (under the default rules).
        #[arg(long)]
        instance: Option<PathBuf>,
        /// Random cases per suite.
        #[arg(long, default_value_t = 200)]
        cases: usize,
    },
}

#[derive(Debug)]
enum Failure {
    Missing(String),
    Malformed(String),
    Invalid(String),
    Runtime(String),
    Verification(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Missing(_) => 2,
            Failure::Runtime(_) => 3,
            Failure::Verification(_) => 4,
            Failure::Malformed(_) => 5,
            Failure::Invalid(_) => 6,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Missing(m)
            | Failure::Malformed(m)
            | Failure::Invalid(m)
            | Failure::Runtime(m)
            | Failure::Verification(m) => m,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        let m = e.to_string();
        match e {
            ConfigError::Io { .. } => Failure::Missing(m),
            ConfigError::Syntax(_) => Failure::Malformed(m),
            ConfigError::UnknownKeys(_) | ConfigError::Invalid(_) => Failure::Invalid(m),
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(c) => c.into(),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<AuctionInstanceError> for Failure {
    fn from(e: AuctionInstanceError) -> Self {
        match e {
            AuctionInstanceError::Syntax(_) => Failure::Malformed(e.to_string()),
            AuctionInstanceError::UnknownKeys(_) => Failure::Invalid(e.to_string()),
        }
    }
}

impl From<MigrationInstanceError> for Failure {
    fn from(e: MigrationInstanceError) -> Self {
        match e {
            MigrationInstanceError::Syntax(_) => Failure::Malformed(e.to_string()),
            _ => Failure::Invalid(e.to_string()),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Failure + '_ {
    move |e| Failure::Runtime(format!("{}: {e}", path.display()))
}

fn read_input(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Missing(format!("cannot read {}: {e}", path.display())))
}

fn load_config(cli: &Cli) -> Result<SimConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => parse_config(p)?,
        None => SimConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(r) = cli.rounds {
        cfg.rounds = r;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Prints to stdout; a closed pipe (`| head`) is not an error.
fn emit(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{text}");
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let started = Instant::now();
    match &cli.command {
        Command::Simulate { from_manifest } => {
            let cfg = match from_manifest {
                Some(p) => RunManifest::load_config(p)?,
                None => load_config(cli)?,
            };
            let name = match cli.format {
                Format::Jsonl => "metrics.jsonl",
                Format::Csv => "metrics.csv",
            };
            let mut manifest = RunManifest::new("simulate", &cfg, &cli.out, &[name]);
            manifest.write(&cli.out)?;
            let run = simulate(&cfg)?;
            let path = cli.out.join(name);
            let mut w = create(&path)?;
            match cli.format {
                Format::Jsonl => write_metrics_jsonl(&run.metrics, &mut w).map_err(io_err(&path))?,
                Format::Csv => write_metrics_csv(&run.metrics, cfg.n_regions, &mut w)
                    .map_err(|e| Failure::Runtime(e.to_string()))?,
            }
            w.flush().map_err(io_err(&path))?;
            manifest.finish(&cli.out, started)?;
            emit(&format!(
                "{} rounds, mean participation {:.4}, metrics in {}",
                run.metrics.len(),
                run.mean_participation(),
                path.display()
            ));
        }
        Command::Evogame { x0, horizon, tol } => {
            let cfg = load_config(cli)?;
            if !(*horizon >= 0.0) || !(*tol > 0.0) {
                return Err(Failure::Invalid("horizon must be >= 0 and tol > 0".into()));
            }
            let x = PopulationState::normalized(x0).map_err(|e| Failure::Invalid(format!("--x0: {e}")))?;
            let nb = x.len();
            let game = GameParams::evenly_spaced(nb, cfg.reward_range, cfg.evogame.unit_cost, cfg.evogame.learning_rate);
            let q = vec![capacity_from_snr(cfg.channel.mean_snr()).map_err(|e| Failure::Invalid(e.to_string()))?; nb];
            let steps = (horizon / cfg.evogame.dt).round() as usize;
            let mut manifest = RunManifest::new("evogame", &cfg, &cli.out, &["trajectory.csv"]);
            manifest.args = json!({ "x0": x.as_slice(), "horizon": horizon, "tol": tol });
            manifest.write(&cli.out)?;
            let traj = integrate(&x, &game, &q, cfg.evogame.dt, steps).map_err(|e| Failure::Runtime(e.to_string()))?;
            let path = cli.out.join("trajectory.csv");
            traj.write_csv(create(&path)?).map_err(|e| Failure::Runtime(e.to_string()))?;
            manifest.finish(&cli.out, started)?;
            let eq = detect_equilibrium(&traj, *tol);
            let summary = json!({
                "final_state": traj.last_state().as_slice(),
                "final_speed": sup_norm(traj.derivatives.last().expect("non-empty")),
                "equilibrium_time": eq.map(|e| e.time),
                "trajectory": path,
            });
            emit(&serde_json::to_string_pretty(&summary).expect("serializable"));
        }
        Command::Migrate { instance } => {
            let cfg = load_config(cli)?;
            let inst = MigrationInstance::from_json(&read_input(instance)?)?;
            let queue = inst.queue().map_err(|e| Failure::Invalid(e.to_string()))?;
            let mut manifest = RunManifest::new("migrate", &cfg, &cli.out, &["migration_plan.json", "generations.csv"]);
            manifest.args = json!({ "instance": instance, "params": inst.params });
            manifest.write(&cli.out)?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let out = run_migration(&queue, &inst.receivers, &inst.params, &mut rng)
                .map_err(|e| Failure::Runtime(e.to_string()))?;
            let plan = serde_json::to_string_pretty(&out.plan).expect("serializable");
            let path = cli.out.join("migration_plan.json");
            fs::write(&path, &plan).map_err(io_err(&path))?;
            let log = cli.out.join("generations.csv");
            write_generation_csv(&out.log, create(&log)?).map_err(|e| Failure::Runtime(e.to_string()))?;
            manifest.finish(&cli.out, started)?;
            emit(&plan);
        }
        Command::Auction { instance } => {
            let cfg = load_config(cli)?;
            let inst = AuctionInstance::from_json(&read_input(instance)?)?;
            let mut manifest = RunManifest::new("auction", &cfg, &cli.out, &["auction_outcome.json"]);
            manifest.args = json!({ "instance": instance });
            manifest.write(&cli.out)?;
            let out = inst.run().map_err(|e| Failure::Runtime(e.to_string()))?;
            let text = serde_json::to_string_pretty(&out).expect("serializable");
            let path = cli.out.join("auction_outcome.json");
            fs::write(&path, &text).map_err(io_err(&path))?;
            manifest.finish(&cli.out, started)?;
            emit(&text);
        }
        Command::Verify { instance, cases } => {
            let cfg = load_config(cli)?;
            let inst = match instance {
                Some(p) => Some(AuctionInstance::from_json(&read_input(p)?)?),
                None => None,
            };
            let results = verify::run_all(inst.as_ref(), *cases, cfg.seed);
            let mut failed = 0;
            for r in &results {
                let tag = if r.ok { "PASS" } else { "FAIL" };
                emit(&format!("{tag} {}: {}", r.name, r.detail));
                failed += usize::from(!r.ok);
            }
            if failed > 0 {
                return Err(Failure::Verification(format!("{failed} verification suite(s) failed")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
