use std::path::Path;
use std::process::{Command, Output};

fn quadrl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quadrl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMOKE: &str = "\
total_steps = 400
eval_interval = 200
eval_episodes = 2
hidden_units = 16
warmup_steps = 100
batch_size = 32
";

fn write_config(dir: &Path) -> String {
    let path = dir.join("smoke.toml");
    std::fs::write(&path, SMOKE).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn verify_passes_and_reports_every_property() {
    let o = quadrl(&["verify", "--seed", "17"]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    let out = stdout(&o);
    for name in [
        "dynamics equivariance (1 step)",
        "dynamics equivariance (100 steps)",
        "reward invariance",
        "quotient well-definedness",
        "network invariance",
        "gradient check",
        "RK4 order (forced maneuver)",
        "RK4 order (exact spin)",
        "mixer round trip",
    ] {
        assert!(out.contains(&format!("[PASS] {name}:")), "{name} missing from\n{out}");
    }
}

#[test]
fn unknown_config_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "gama = 0.99\n").unwrap();
    let o = quadrl(&["train", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("gama"), "{}", stderr(&o));
}

#[test]
fn flags_are_validated() {
    let o = quadrl(&["train", "--algo", "ppo"]);
    assert!(!o.status.success());
    let o = quadrl(&["train", "--steps", "10"]);
    // eval interval 5000 exceeds the total
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("eval_interval"), "{}", stderr(&o));
}

#[test]
fn train_compare_replay() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().to_str().unwrap();
    for mode in ["baseline", "equivariant"] {
        let o = quadrl(&["train", "--config", &cfg, "--out", out, "--seeds", "1,2", "--mode", mode]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert_eq!(stdout(&o).lines().count(), 2, "one summary line per seed");
    }
    let o = quadrl(&["compare", "--config", &cfg, "--out", out, "--seeds", "1,2"]);
    assert!(matches!(o.status.code(), Some(0) | Some(2)), "{}", stderr(&o));
    assert!(stdout(&o).contains("steps_to_threshold"));
    assert!(dir.path().join("td3_comparison.csv").exists());

    let o = quadrl(&["compare", "--config", &cfg, "--out", out, "--seeds", "1,2,3"]);
    assert_eq!(o.status.code(), Some(1));

    let policy = dir.path().join("td3_equivariant_seed1_final.qrl");
    assert!(policy.exists());
    let o = quadrl(&[
        "replay",
        "--config",
        &cfg,
        "--out",
        out,
        "--seeds",
        "1",
        "--policy",
        policy.to_str().unwrap(),
        "--episodes",
        "2",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).matches("terminal position").count(), 2);
    assert!(dir.path().join("replay_ep1.csv").exists());

    let o = quadrl(&["replay", "--out", out, "--policy", "/nonexistent.qrl"]);
    assert_eq!(o.status.code(), Some(1));
}
