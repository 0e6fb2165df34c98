//! Files written and read by the harness: configs, logs, snapshots and
//! trajectories.

use std::path::Path;

use quadrl::bench::compare::{cmd_compare, CompareStatus};
use quadrl::bench::config::{load_config, ConfigError, RunConfig};
use quadrl::bench::run::{cmd_replay, cmd_train, log_path, read_log, snapshot_path};
use quadrl::nn::{Activation, Mlp};
use quadrl::rl::{Policy, RlError, SacConfig, Td3Config};
use quadrl::{AgentMode, Algorithm};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn smoke(dir: &Path, algo: Algorithm, mode: AgentMode) -> RunConfig {
    RunConfig {
        algo,
        mode,
        seeds: vec![4, 5],
        total_steps: 600,
        eval_interval: 200,
        eval_episodes: 2,
        hidden_units: 16,
        out_dir: dir.to_path_buf(),
        td3: Td3Config {
            warmup_steps: 100,
            batch_size: 32,
            ..Td3Config::default()
        },
        sac: SacConfig {
            warmup_steps: 100,
            batch_size: 32,
            ..SacConfig::default()
        },
        ..RunConfig::default()
    }
}

fn without_wall_time(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.rsplit_once(',').unwrap().0.to_string())
        .collect()
}

#[test]
fn config_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    std::fs::write(&path, "# desk run\nalgo = \"sac\"\ngamma = 0.95\nseeds = [7]\n").unwrap();
    let cfg = load_config(&path).unwrap();
    assert_eq!(cfg.algo, Algorithm::Sac);
    assert_eq!(cfg.seeds, vec![7]);
    assert_eq!(cfg.sac.gamma, 0.95);
    assert_eq!(cfg.td3.gamma, 0.95);
    assert_eq!(cfg.total_steps, RunConfig::default().total_steps);

    std::fs::write(&path, "gamma = 0.99\ngama = 0.99\n").unwrap();
    match load_config(&path) {
        Err(ConfigError::UnknownKey { key, line }) => {
            assert_eq!(key, "gama");
            assert_eq!(line, 2);
        }
        other => panic!("{other:?}"),
    }
    std::fs::write(&path, "eval_interval = 10\ntotal_steps = 5\n").unwrap();
    assert!(matches!(load_config(&path), Err(ConfigError::Invalid { .. })));
    assert!(matches!(
        load_config(dir.path().join("absent.toml")),
        Err(ConfigError::Missing { .. })
    ));
}

#[test]
fn training_is_deterministic_and_evenly_logged() {
    for algo in [Algorithm::Td3, Algorithm::Sac] {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        for dir in [&a, &b] {
            cmd_train(&smoke(dir.path(), algo, AgentMode::Baseline)).unwrap();
        }
        for seed in [4, 5] {
            let pa = log_path(a.path(), algo, AgentMode::Baseline, seed);
            let pb = log_path(b.path(), algo, AgentMode::Baseline, seed);
            assert_eq!(without_wall_time(&pa), without_wall_time(&pb));
            let steps: Vec<usize> = read_log(&pa).unwrap().iter().map(|r| r.env_step).collect();
            assert_eq!(steps, vec![200, 400, 600]);
            let fa = std::fs::read(snapshot_path(a.path(), algo, AgentMode::Baseline, seed, "final")).unwrap();
            let fb = std::fs::read(snapshot_path(b.path(), algo, AgentMode::Baseline, seed, "final")).unwrap();
            assert_eq!(fa, fb);
        }
    }
}

#[test]
fn compare_reads_both_modes() {
    let dir = tempfile::tempdir().unwrap();
    for mode in AgentMode::ALL {
        cmd_train(&smoke(dir.path(), Algorithm::Td3, mode)).unwrap();
    }
    let cfg = smoke(dir.path(), Algorithm::Td3, AgentMode::Baseline);
    let s = cmd_compare(&cfg).unwrap();
    assert_eq!(s.baseline.curve.len(), 3);
    assert_eq!(
        s.status == CompareStatus::Improved,
        s.equivariant.steps_to_threshold.unwrap_or(usize::MAX) < s.baseline.steps_to_threshold.unwrap_or(usize::MAX)
    );
    let csv = std::fs::read_to_string(dir.path().join("td3_comparison.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("step,mode,mean,two_sigma"));
    assert_eq!(lines.count(), 6);

    let missing = RunConfig {
        seeds: vec![4, 5, 6],
        ..cfg
    };
    assert!(cmd_compare(&missing).is_err());
}

#[test]
fn replayed_thrusts_stay_in_range() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke(dir.path(), Algorithm::Td3, AgentMode::Equivariant);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    // a large final layer pushes outputs into saturation
    let mut net = Mlp::new(&[17, 16, 4], &[Activation::Relu, Activation::Tanh]).unwrap();
    net.init_uniform(&mut rng, Some(3.0));
    let path = dir.path().join("random.qrl");
    Policy::from_net(net).unwrap().save(&path).unwrap();
    let eps = cmd_replay(&path, &cfg, 3, false).unwrap();
    let t_max = cfg.quad.max_thrust;
    for ep in &eps {
        assert!(!ep.rows.is_empty());
        for r in &ep.rows {
            for t in [r.t1, r.t2, r.t3, r.t4] {
                assert!((0.0..=t_max).contains(&t), "{t}");
            }
        }
    }
}

#[test]
fn snapshot_with_unknown_shape_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke(dir.path(), Algorithm::Td3, AgentMode::Equivariant);
    let net = Mlp::new(&[5, 8, 4], &[Activation::Relu, Activation::Tanh]).unwrap();
    let path = dir.path().join("odd.qrl");
    net.save(&path).unwrap();
    let err = cmd_replay(&path, &cfg, 1, false).unwrap_err();
    assert!(err.to_string().contains("5"), "{err}");
    assert!(matches!(Policy::load(&path), Err(RlError::UnknownArchitecture { .. })));
}
