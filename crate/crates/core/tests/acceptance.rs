//! Release gate: one line per acceptance criterion, non-zero exit if any
//! fails. Criteria 8 and 9 train the full desk-scale protocol (several CPU
//! hours on one core); artifacts land in the cargo target tmp directory.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::Instant;

use quadrl::bench::compare::{cmd_compare, ComparisonSummary};
use quadrl::bench::config::RunConfig;
use quadrl::bench::run::{cmd_train, log_path, snapshot_path, SeedOutcome};
use quadrl::bench::verify::{
    forced_maneuver, gradient_checks, random_action, random_state, self_convergence_errors, Model, ORDER_STEPS,
};
use quadrl::dynamics::{inverse_mixer, mixer, rk4_step, Wrench};
use quadrl::env::reward;
use quadrl::nn::Mlp;
use quadrl::rl::{encode, evaluate, Policy, SacConfig, Streams, Td3Config, ACTION_DIM};
use quadrl::so3::Vec3;
use quadrl::symmetry::{act_on_state, reduce_state, GroupElement};
use quadrl::{AgentMode, Algorithm, EnvConfig, QuadrotorParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict { passed, detail }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn angle(rng: &mut ChaCha8Rng) -> GroupElement {
    GroupElement::new(rng.random_range(-PI..PI))
}

fn dynamics_equivariance() -> Verdict {
    let p = QuadrotorParams::default();
    let mut r = rng(101);
    let mut one = 0.0f64;
    for _ in 0..1000 {
        let s = random_state(&mut r);
        let g = angle(&mut r);
        let a = random_action(&mut r, &p);
        let lhs = rk4_step(&act_on_state(&s, &g), &a, 0.01, &p).unwrap();
        let rhs = act_on_state(&rk4_step(&s, &a, 0.01, &p).unwrap(), &g);
        one = one.max(lhs.max_abs_diff(&rhs));
    }
    let mut many = 0.0f64;
    for _ in 0..100 {
        let mut s = random_state(&mut r);
        s.omega /= 2.0;
        let g = angle(&mut r);
        let mut t = act_on_state(&s, &g);
        for _ in 0..100 {
            let a = random_action(&mut r, &p);
            s = rk4_step(&s, &a, 0.01, &p).unwrap();
            t = rk4_step(&t, &a, 0.01, &p).unwrap();
        }
        many = many.max(t.max_abs_diff(&act_on_state(&s, &g)));
    }
    verdict(
        one <= 1e-10 && many <= 1e-8,
        format!("1-step worst {one:.2e} (<= 1e-10), 100-step worst {many:.2e} (<= 1e-8)"),
    )
}

fn reward_invariance() -> Verdict {
    let p = QuadrotorParams::default();
    let cfg = EnvConfig::default();
    let mut r = rng(102);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let s = random_state(&mut r);
        let g = angle(&mut r);
        let (a, a_prev) = (random_action(&mut r, &p), random_action(&mut r, &p));
        let d = reward(&act_on_state(&s, &g), &a, &a_prev, &cfg, &p) - reward(&s, &a, &a_prev, &cfg, &p);
        worst = worst.max(d.abs());
    }
    verdict(worst <= 1e-12, format!("worst {worst:.2e} (<= 1e-12) over 1000 cases"))
}

fn quotient() -> Verdict {
    let mut r = rng(103);
    let mut worst = 0.0f64;
    let mut lateral = 0.0f64;
    let mut degenerate = 0;
    for k in 0..1000 {
        let mut s = random_state(&mut r);
        if k % 10 == 0 {
            s.x.x = 0.0;
            s.x.y = 0.0;
            degenerate += 1;
        }
        let g = angle(&mut r);
        let (a, ga) = reduce_state(&s).unwrap();
        let (b, _) = reduce_state(&act_on_state(&s, &g)).unwrap();
        worst = worst.max(a.max_abs_diff(&b));
        lateral = lateral.max(act_on_state(&s, &ga).x.y.abs());
    }
    verdict(
        worst <= 1e-10 && lateral <= 1e-10,
        format!("worst {worst:.2e}, rotated x2 {lateral:.2e} (both <= 1e-10), {degenerate} cases with x1 = x2 = 0"),
    )
}

fn network_invariance() -> Verdict {
    let cfg = EnvConfig::default();
    let mut r = rng(104);
    let dim = AgentMode::Equivariant.obs_dim();
    let actor = Mlp::actor(dim, 256, ACTION_DIM, &mut r);
    let critic = Mlp::critic(dim + ACTION_DIM, 256, &mut r);
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let s = random_state(&mut r);
        let g = angle(&mut r);
        let a: Vec<f64> = (0..ACTION_DIM).map(|_| r.random_range(-1.0..1.0)).collect();
        let o1 = encode(&s, AgentMode::Equivariant, &cfg).unwrap();
        let o2 = encode(&act_on_state(&s, &g), AgentMode::Equivariant, &cfg).unwrap();
        let p1 = actor.predict_one(&o1).unwrap();
        let p2 = actor.predict_one(&o2).unwrap();
        for (x, y) in p1.iter().zip(&p2) {
            worst = worst.max((x - y).abs());
        }
        let q = |o: Vec<f64>| critic.predict_one(&[o, a.clone()].concat()).unwrap()[0];
        worst = worst.max((q(o1) - q(o2)).abs());
    }
    verdict(worst <= 1e-10, format!("worst {worst:.2e} (<= 1e-10) over 500 cases"))
}

fn gradients() -> Verdict {
    let report = gradient_checks(100, 256, &mut rng(105));
    verdict(
        report.passed,
        format!("max relative error {:.2e} (< 1e-5); {}", report.worst_error, report.detail),
    )
}

fn integrator_order() -> Verdict {
    let p = QuadrotorParams::default();
    let (s0, schedule) = forced_maneuver(&p, &mut rng(106));
    let errs = self_convergence_errors(&Model::default(), &p, &s0, &schedule);
    let ratios: Vec<f64> = errs.windows(2).map(|w| w[0] / w[1]).collect();
    let ok = ratios.len() == 3 && ratios.iter().all(|r| (12.0..=20.0).contains(r));
    verdict(
        ok,
        format!(
            "dt {ORDER_STEPS:?}: errors [{}], ratios {ratios:.2?} (each in [12, 20])",
            errs.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn mixer_round_trip() -> Verdict {
    let p = QuadrotorParams::default();
    let mut r = rng(107);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let a = random_action(&mut r, &p);
        let back = inverse_mixer(&mixer(&a, &p), &p);
        for (x, y) in a.thrusts.iter().zip(back.thrusts) {
            worst = worst.max((x - y).abs());
        }
        let w = Wrench {
            thrust: r.random_range(0.0..4.0 * p.max_thrust),
            moment: Vec3::new(r.random_range(-2.0..2.0), r.random_range(-2.0..2.0), r.random_range(-0.2..0.2)),
        };
        let w2 = mixer(&inverse_mixer(&w, &p), &p);
        worst = worst.max((w.thrust - w2.thrust).abs()).max((w.moment - w2.moment).amax());
    }
    verdict(worst <= 1e-12, format!("worst {worst:.2e} (<= 1e-12) over 1000 draws each way"))
}

fn desk_config(root: &Path, algo: Algorithm, steps: usize) -> RunConfig {
    RunConfig {
        algo,
        seeds: vec![0, 1, 2],
        total_steps: steps,
        out_dir: root.join(algo.as_str()),
        ..RunConfig::default()
    }
}

struct DeskRuns {
    td3: ComparisonSummary,
    sac: ComparisonSummary,
    td3_equivariant: Vec<SeedOutcome>,
    td3_config: RunConfig,
}

fn desk_runs(root: &Path) -> DeskRuns {
    let mut summaries = Vec::new();
    let mut td3_equivariant = Vec::new();
    for (algo, steps) in [(Algorithm::Td3, 100_000), (Algorithm::Sac, 50_000)] {
        for mode in AgentMode::ALL {
            let cfg = RunConfig {
                mode,
                ..desk_config(root, algo, steps)
            };
            let started = Instant::now();
            let outcomes = cmd_train(&cfg).unwrap();
            eprintln!(
                "  trained {algo} {mode} x{} in {:.0} s",
                outcomes.len(),
                started.elapsed().as_secs_f64()
            );
            if algo == Algorithm::Td3 && mode == AgentMode::Equivariant {
                td3_equivariant = outcomes;
            }
        }
        let summary = cmd_compare(&desk_config(root, algo, steps)).unwrap();
        eprint!("{}", summary.table());
        summaries.push(summary);
    }
    let sac = summaries.pop().unwrap();
    let td3 = summaries.pop().unwrap();
    DeskRuns {
        td3,
        sac,
        td3_equivariant,
        td3_config: desk_config(root, Algorithm::Td3, 100_000),
    }
}

fn comparison_line(s: &ComparisonSummary) -> String {
    let steps = |v: Option<usize>| v.map_or("never".to_string(), |x| x.to_string());
    format!(
        "{}: steps-to-threshold eq {} vs base {} ({}), final eq {:.3} vs base {:.3} - pooled std {:.3} ({})",
        s.algo,
        steps(s.equivariant.steps_to_threshold),
        steps(s.baseline.steps_to_threshold),
        if s.speed_ok() { "ok" } else { "slower" },
        s.equivariant.final_mean,
        s.baseline.final_mean,
        s.pooled_std,
        if s.final_return_ok() { "ok" } else { "lower" },
    )
}

fn learning_comparison(runs: &DeskRuns) -> Verdict {
    let ok = |s: &ComparisonSummary| s.speed_ok() && s.final_return_ok();
    verdict(
        ok(&runs.td3) && ok(&runs.sac),
        format!("{}; {}", comparison_line(&runs.td3), comparison_line(&runs.sac)),
    )
}

/// The equivariant TD3 seed whose best checkpoint scored highest during
/// training, evaluated on ten starts it never saw.
fn policy_quality(runs: &DeskRuns) -> Verdict {
    let cfg = &runs.td3_config;
    let Some((seed, record)) = runs
        .td3_equivariant
        .iter()
        .filter_map(|o| o.log.best.as_ref().map(|(r, _)| (o.seed, *r)))
        .max_by(|a, b| a.1.mean_return.total_cmp(&b.1.mean_return))
    else {
        return verdict(false, "no evaluated equivariant TD3 policy".into());
    };
    let path = snapshot_path(&cfg.out_dir, Algorithm::Td3, AgentMode::Equivariant, seed, "best");
    let policy = Policy::load(&path).unwrap();
    let stats = evaluate(&policy, &cfg.env, &cfg.quad, 10, &mut Streams::HeldOut.rng(seed)).unwrap();
    verdict(
        stats.mean_terminal_error < 0.1 && stats.position_bound_terminations == 0,
        format!(
            "seed {seed} best checkpoint (step {}): mean terminal error {:.4} m (< 0.1), {} position-bound terminations (0), return {:.3}",
            record.env_step, stats.mean_terminal_error, stats.position_bound_terminations, stats.mean_return
        ),
    )
}

fn determinism(root: &Path) -> Verdict {
    let strip = |p: &PathBuf| -> Vec<String> {
        std::fs::read_to_string(p)
            .unwrap()
            .lines()
            .map(|l| l.rsplit_once(',').unwrap().0.to_string())
            .collect()
    };
    let mut logs = Vec::new();
    let mut snapshots = Vec::new();
    for run in ["a", "b"] {
        let cfg = RunConfig {
            seeds: vec![3],
            total_steps: 5000,
            eval_interval: 1000,
            eval_episodes: 3,
            out_dir: root.join(run),
            td3: Td3Config::default(),
            sac: SacConfig::default(),
            ..RunConfig::default()
        };
        cmd_train(&cfg).unwrap();
        logs.push(strip(&log_path(&cfg.out_dir, cfg.algo, cfg.mode, 3)));
        snapshots.push(std::fs::read(snapshot_path(&cfg.out_dir, cfg.algo, cfg.mode, 3, "final")).unwrap());
    }
    verdict(
        logs[0] == logs[1] && snapshots[0] == snapshots[1] && logs[0].len() == 6,
        format!(
            "two 5000-step runs: {} log rows, logs identical {}, final snapshots identical {}",
            logs[0].len() - 1,
            logs[0] == logs[1],
            snapshots[0] == snapshots[1]
        ),
    )
}

fn main() {
    let root = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    let _ = std::fs::remove_dir_all(&root);
    std::fs::create_dir_all(&root).unwrap();

    let mut results: Vec<(u32, &str, Verdict)> = Vec::new();
    let mut report = |n: u32, name: &'static str, v: Verdict| {
        println!("criterion {n:>2} [{}] {name}: {}", if v.passed { "PASS" } else { "FAIL" }, v.detail);
        results.push((n, name, v));
    };
    report(1, "dynamics equivariance", dynamics_equivariance());
    report(2, "reward invariance", reward_invariance());
    report(3, "quotient correctness", quotient());
    report(4, "network invariance", network_invariance());
    report(5, "gradient correctness", gradients());
    report(6, "integrator order", integrator_order());
    report(7, "mixer round trip", mixer_round_trip());
    report(10, "determinism", determinism(&root.join("determinism")));
    // `cargo test --test acceptance -- --skip-training` leaves out the
    // multi-hour criteria; the run then still exits non-zero
    if std::env::args().any(|a| a == "--skip-training") {
        println!("criteria  8 and 9 [SKIP] not run (--skip-training)");
        std::process::exit(1);
    }
    let runs = desk_runs(&root.join("desk"));
    report(8, "desk-scale learning comparison", learning_comparison(&runs));
    report(9, "trained-policy quality", policy_quality(&runs));

    let failed: Vec<u32> = results.iter().filter(|r| !r.2.passed).map(|r| r.0).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", results.len());
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
