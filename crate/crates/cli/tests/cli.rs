use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

fn hfl(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hfl-sim"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("HFL_SIM_OUT")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn evogame_trajectory_settles() {
    let dir = tempfile::tempdir().unwrap();
    let o = hfl(dir.path(), &["evogame", "--x0", "0.18,0.32,0.50"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,x_1,x_2,x_3,dx_1,dx_2,dx_3");
    let rows: Vec<Vec<f64>> = text.lines().skip(1).map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 50_001);
    for row in &rows[rows.len() - 100..] {
        assert!(row[4..].iter().all(|d| d.abs() < 1e-4));
        assert!((row[1..4].iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn auction_fixture_pays_fourteen() {
    let dir = tempfile::tempdir().unwrap();
    let o = hfl(dir.path(), &["auction", fixture("abc_auction.json").to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let out: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(out["total_payment"], 14.0);
    let saved: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("auction_outcome.json")).unwrap()).unwrap();
    assert_eq!(saved, out);
}

#[test]
fn zero_round_simulation_writes_manifest_and_empty_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let o = hfl(dir.path(), &["simulate", "--rounds", "0"]);
    assert_eq!(code(&o), 0);
    assert_eq!(std::fs::read(dir.path().join("metrics.jsonl")).unwrap(), b"");
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "simulate");
    assert_eq!(m["config"]["rounds"], 0);
    assert!(m["wall_clock_seconds"].is_number());
}

#[test]
fn manifest_replay_is_bitwise() {
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    assert_eq!(code(&hfl(first.path(), &["simulate", "--rounds", "8", "--seed", "31"])), 0);
    let manifest = first.path().join("manifest.json");
    let o = hfl(second.path(), &["simulate", "--from-manifest", manifest.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let a = std::fs::read(first.path().join("metrics.jsonl")).unwrap();
    assert_eq!(a.iter().filter(|&&b| b == b'\n').count(), 8);
    assert_eq!(a, std::fs::read(second.path().join("metrics.jsonl")).unwrap());
}

#[test]
fn csv_format_and_env_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_hfl-sim"))
        .args(["--format", "csv", "--rounds", "2", "simulate"])
        .env("HFL_SIM_OUT", dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let text = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn migrate_writes_a_feasible_plan() {
    let dir = tempfile::tempdir().unwrap();
    let o = hfl(dir.path(), &["--seed", "3", "migrate", fixture("small_migration.json").to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let plan: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(plan["assignments"].as_array().unwrap().len(), 4);
    let log = std::fs::read_to_string(dir.path().join("generations.csv")).unwrap();
    assert_eq!(log.lines().count(), 41);
    // same seed, same plan
    let again = hfl(dir.path(), &["--seed", "3", "migrate", fixture("small_migration.json").to_str().unwrap()]);
    assert_eq!(again.stdout, o.stdout);
}

#[test]
fn verify_passes_under_default_rules() {
    let dir = tempfile::tempdir().unwrap();
    let o = hfl(
        dir.path(),
        &["verify", "--cases", "30", "--instance", fixture("abc_auction.json").to_str().unwrap()],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 5);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let write = |name: &str, body: &str| {
        let f = p.join(name);
        std::fs::write(&f, body).unwrap();
        f.to_str().unwrap().to_string()
    };
    assert_eq!(code(&hfl(p, &["frobnicate"])), 1);
    assert_eq!(code(&hfl(p, &["evogame"])), 1);
    assert_eq!(code(&hfl(p, &["--format", "xml", "simulate"])), 1);
    assert_eq!(code(&hfl(p, &["--config", "/definitely/not/here.toml", "simulate"])), 2);
    assert_eq!(code(&hfl(p, &["--config", &write("a.toml", "n_users = ["), "simulate"])), 5);
    assert_eq!(code(&hfl(p, &["--config", &write("b.toml", "n_regions = 1"), "simulate"])), 6);
    let unknown = hfl(p, &["--config", &write("c.toml", "colour = 2\n[auction]\nbudget = 1"), "simulate"]);
    assert_eq!(code(&unknown), 6);
    let err = String::from_utf8_lossy(&unknown.stderr);
    assert!(err.contains("colour") && err.contains("auction.budget"), "{err}");
    assert_eq!(code(&hfl(p, &["auction", &write("d.json", "{\"bids\": [")])), 5);
    // accuracy 0.99 needs 100 iterations; T_g = 10 leaves nobody feasible
    let hopeless = r#"{"bids": [{"bs": 1, "schedule": 0, "price": 3, "accuracy": 0.99, "t_cmp": 1, "t_max": 1}],
                      "config": {"k_min": 1, "t_g": 10, "eta": 1}}"#;
    assert_eq!(code(&hfl(p, &["auction", &write("e.json", hopeless)])), 3);
    assert_eq!(code(&hfl(p, &["--help"])), 0);
}

#[test]
fn empty_config_file_means_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("empty.toml");
    std::fs::write(&cfg, "").unwrap();
    let o = hfl(dir.path(), &["--config", cfg.to_str().unwrap(), "--rounds", "0", "simulate"]);
    assert_eq!(code(&o), 0);
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["n_servers"], 10);
    assert_eq!(m["config"]["congestion_coeff"], 10.0);
    assert_eq!(m["config"]["reward_range"], serde_json::json!([600.0, 900.0]));
}
