//! Multi-seed training runs, their CSV logs and snapshots, and policy replay.
//!
//! Files written under the output directory, per seed:
//!
//! ```text
//! {algo}_{mode}_seed{n}.csv            evaluation log
//! {algo}_{mode}_seed{n}_final.qrl      actor after the last step
//! {algo}_{mode}_seed{n}_best.qrl       actor at the best evaluation
//! {algo}_{mode}_seed{n}_step{k}.qrl    periodic checkpoints (optional)
//! ```
//!
//! Log columns: `algo, mode, seed, env_step, eval_mean_return,
//! eval_std_return, mean_terminal_error_m, wall_time_s`.

use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::RunConfig;
use crate::dynamics::{QuadrotorParams, State};
use crate::env::{sample_initial_state, EnvConfig, QuadEnv};
use crate::rl::{train, AgentMode, Algorithm, EvalRecord, Policy, RlError, Streams, TrainEvent, TrainLog};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Rl(#[from] RlError),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv error on {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("seed {seed} failed: {source}")]
    Seed { seed: u64, source: Box<RunError> },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> RunError + '_ {
    move |source| RunError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// One row of a training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub algo: String,
    pub mode: String,
    pub seed: u64,
    pub env_step: usize,
    pub eval_mean_return: f64,
    pub eval_std_return: f64,
    pub mean_terminal_error_m: f64,
    pub wall_time_s: f64,
}

impl LogRow {
    pub fn new(algo: Algorithm, mode: AgentMode, seed: u64, r: &EvalRecord) -> Self {
        Self {
            algo: algo.to_string(),
            mode: mode.to_string(),
            seed,
            env_step: r.env_step,
            eval_mean_return: r.mean_return,
            eval_std_return: r.std_return,
            mean_terminal_error_m: r.mean_terminal_error,
            wall_time_s: r.wall_time_s,
        }
    }
}

pub fn run_stem(algo: Algorithm, mode: AgentMode, seed: u64) -> String {
    format!("{algo}_{mode}_seed{seed}")
}

pub fn log_path(out: &Path, algo: Algorithm, mode: AgentMode, seed: u64) -> PathBuf {
    out.join(format!("{}.csv", run_stem(algo, mode, seed)))
}

pub fn snapshot_path(out: &Path, algo: Algorithm, mode: AgentMode, seed: u64, tag: &str) -> PathBuf {
    out.join(format!("{}_{tag}.qrl", run_stem(algo, mode, seed)))
}

pub fn read_log(path: &Path) -> Result<Vec<LogRow>, RunError> {
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err(path))?;
    rdr.deserialize().collect::<Result<Vec<LogRow>, _>>().map_err(csv_err(path))
}

/// Result of one seed of `train`.
#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub seed: u64,
    pub log: TrainLog,
    pub log_path: PathBuf,
}

/// Trains one seed, streaming its log rows to disk as evaluations complete.
pub fn run_seed(cfg: &RunConfig, seed: u64) -> Result<SeedOutcome, RunError> {
    let out = &cfg.out_dir;
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    let path = log_path(out, cfg.algo, cfg.mode, seed);
    let file = File::create(&path).map_err(io_err(&path))?;
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    // header written by hand so it exists even when no evaluation happens
    wtr.write_record([
        "algo",
        "mode",
        "seed",
        "env_step",
        "eval_mean_return",
        "eval_std_return",
        "mean_terminal_error_m",
        "wall_time_s",
    ])
    .map_err(csv_err(&path))?;
    wtr.flush().map_err(io_err(&path))?;

    let mut side_error: Option<RunError> = None;
    let log = train(&cfg.spec(seed), |event| {
        if side_error.is_some() {
            return;
        }
        let res = match event {
            TrainEvent::Eval { record, .. } => wtr
                .serialize(LogRow::new(cfg.algo, cfg.mode, seed, record))
                .map_err(csv_err(&path))
                .and_then(|_| wtr.flush().map_err(io_err(&path))),
            TrainEvent::Checkpoint { env_step, policy } => {
                let p = snapshot_path(out, cfg.algo, cfg.mode, seed, &format!("step{env_step}"));
                policy.save(&p).map_err(RunError::from)
            }
        };
        if let Err(e) = res {
            side_error = Some(e);
        }
    })?;
    if let Some(e) = side_error {
        return Err(e);
    }
    log.final_policy
        .save(snapshot_path(out, cfg.algo, cfg.mode, seed, "final"))?;
    if let Some((_, best)) = &log.best {
        best.save(snapshot_path(out, cfg.algo, cfg.mode, seed, "best"))?;
    }
    Ok(SeedOutcome {
        seed,
        log,
        log_path: path,
    })
}

/// One-line human summary of a finished seed.
pub fn seed_summary(o: &SeedOutcome) -> String {
    match (o.log.records.last(), &o.log.best) {
        (Some(last), Some((best, _))) => format!(
            "{} {} seed {}: final return {:.3} ± {:.3} (terminal error {:.3} m) at step {}, best {:.3} at step {}, {:.1} s -> {}",
            o.log.algo,
            o.log.mode,
            o.seed,
            last.mean_return,
            last.std_return,
            last.mean_terminal_error,
            last.env_step,
            best.mean_return,
            best.env_step,
            last.wall_time_s,
            o.log_path.display()
        ),
        _ => format!(
            "{} {} seed {}: no evaluations -> {}",
            o.log.algo,
            o.log.mode,
            o.seed,
            o.log_path.display()
        ),
    }
}

/// Runs every configured seed. Seeds are independent trainers; they run on
/// scoped worker threads when more than one core is available. Results come
/// back in seed order once all workers are done.
pub fn cmd_train(cfg: &RunConfig) -> Result<Vec<SeedOutcome>, RunError> {
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(cfg.seeds.len())
        .max(1);
    let mut results: Vec<Option<Result<SeedOutcome, RunError>>> = (0..cfg.seeds.len()).map(|_| None).collect();
    if workers == 1 {
        for (slot, &seed) in results.iter_mut().zip(&cfg.seeds) {
            *slot = Some(run_seed(cfg, seed));
        }
    } else {
        for (chunk_slots, chunk_seeds) in results.chunks_mut(workers).zip(cfg.seeds.chunks(workers)) {
            std::thread::scope(|scope| {
                let handles: Vec<_> = chunk_seeds
                    .iter()
                    .map(|&seed| scope.spawn(move || run_seed(cfg, seed)))
                    .collect();
                for (slot, h) in chunk_slots.iter_mut().zip(handles) {
                    *slot = Some(h.join().expect("trainer thread panicked"));
                }
            });
        }
    }
    results
        .into_iter()
        .zip(&cfg.seeds)
        .map(|(r, &seed)| {
            r.expect("every seed ran").map_err(|e| RunError::Seed {
                seed,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Per-step record of a replayed episode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
    pub v1: f64,
    pub v2: f64,
    pub v3: f64,
    pub r11: f64,
    pub r12: f64,
    pub r13: f64,
    pub r21: f64,
    pub r22: f64,
    pub r23: f64,
    pub r31: f64,
    pub r32: f64,
    pub r33: f64,
    pub omega1: f64,
    pub omega2: f64,
    pub omega3: f64,
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub t4: f64,
    pub reward: f64,
    pub done_reason: &'static str,
}

#[derive(Debug, Clone)]
pub struct ReplayEpisode {
    pub rows: Vec<TrajectoryRow>,
    pub terminal_state: State,
    pub terminal_error: f64,
    pub path: PathBuf,
}

/// Rolls `policy` out from `s0` without noise. Each row holds the state at
/// the start of a control period, the thrusts applied during it, and the
/// reward it earned; the last row also names why the episode ended.
pub fn rollout(
    policy: &Policy,
    cfg: &EnvConfig,
    quad: &QuadrotorParams,
    s0: State,
) -> Result<(Vec<TrajectoryRow>, State), RlError> {
    let mut env = QuadEnv::new(*cfg, *quad, 0)?;
    let mut s = env.reset_to(s0);
    let mut rows = Vec::new();
    loop {
        let u = policy.act(&s, cfg)?;
        let k = env.steps();
        let res = env.step(&u)?;
        let r = s.r.to_row_major();
        let [t1, t2, t3, t4] = res.action.thrusts;
        rows.push(TrajectoryRow {
            t: k as f64 * cfg.dt,
            x1: s.x.x,
            x2: s.x.y,
            x3: s.x.z,
            v1: s.v.x,
            v2: s.v.y,
            v3: s.v.z,
            r11: r[0],
            r12: r[1],
            r13: r[2],
            r21: r[3],
            r22: r[4],
            r23: r[5],
            r31: r[6],
            r32: r[7],
            r33: r[8],
            omega1: s.omega.x,
            omega2: s.omega.y,
            omega3: s.omega.z,
            t1,
            t2,
            t3,
            t4,
            reward: res.reward,
            done_reason: res.done_reason.as_str(),
        });
        s = res.next_state;
        if res.done {
            return Ok((rows, s));
        }
    }
}

/// Replays a saved policy for `n_episodes`, writing
/// `{out}/replay_ep{k}.csv` per episode. Starts are drawn from a stream
/// that training never touches, or are the goal hover state when
/// `start_at_goal` is set.
pub fn cmd_replay(
    policy_path: &Path,
    cfg: &RunConfig,
    n_episodes: usize,
    start_at_goal: bool,
) -> Result<Vec<ReplayEpisode>, RunError> {
    let policy = Policy::load(policy_path)?;
    let out = &cfg.out_dir;
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    let mut rng = Streams::HeldOut.rng(cfg.seeds[0]);
    let mut episodes = Vec::with_capacity(n_episodes);
    for k in 0..n_episodes {
        let s0 = if start_at_goal {
            State::at_rest(cfg.env.target())
        } else {
            sample_initial_state(&cfg.env, &mut rng)
        };
        let (rows, terminal) = rollout(&policy, &cfg.env, &cfg.quad, s0)?;
        let path = out.join(format!("replay_ep{k}.csv"));
        let mut wtr = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
        for row in &rows {
            wtr.serialize(row).map_err(csv_err(&path))?;
        }
        wtr.flush().map_err(io_err(&path))?;
        episodes.push(ReplayEpisode {
            rows,
            terminal_error: (terminal.x - cfg.env.target()).norm(),
            terminal_state: terminal,
            path,
        });
    }
    Ok(episodes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rl::{SacConfig, Td3Config};

    fn smoke(dir: &Path) -> RunConfig {
        RunConfig {
            seeds: vec![0, 1],
            total_steps: 300,
            eval_interval: 100,
            eval_episodes: 2,
            hidden_units: 16,
            out_dir: dir.to_path_buf(),
            td3: Td3Config {
                warmup_steps: 50,
                batch_size: 16,
                ..Td3Config::default()
            },
            sac: SacConfig {
                warmup_steps: 50,
                batch_size: 16,
                ..SacConfig::default()
            },
            ..RunConfig::default()
        }
    }

    #[test]
    fn train_writes_logs_and_snapshots() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = smoke(dir.path());
        let outcomes = cmd_train(&cfg).unwrap();
        assert_eq!(outcomes.len(), 2);
        for o in &outcomes {
            let rows = read_log(&o.log_path).unwrap();
            let steps: Vec<usize> = rows.iter().map(|r| r.env_step).collect();
            assert_eq!(steps, vec![100, 200, 300]);
            assert!(rows.iter().all(|r| r.algo == "td3" && r.mode == "equivariant" && r.seed == o.seed));
            for tag in ["final", "best"] {
                let p = snapshot_path(&cfg.out_dir, cfg.algo, cfg.mode, o.seed, tag);
                assert!(Policy::load(&p).is_ok());
            }
        }
        let header = std::fs::read_to_string(&outcomes[0].log_path).unwrap();
        assert!(header.starts_with(
            "algo,mode,seed,env_step,eval_mean_return,eval_std_return,mean_terminal_error_m,wall_time_s\n"
        ));
    }

    #[test]
    fn replay_of_hover_oracle_stays_put() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = smoke(dir.path());
        let p = dir.path().join("hover.qrl");
        Policy::hover_oracle(AgentMode::Equivariant, &cfg.quad).save(&p).unwrap();
        let eps = cmd_replay(&p, &cfg, 1, true).unwrap();
        let ep = &eps[0];
        assert_eq!(ep.rows.len(), cfg.env.max_steps);
        assert!(ep.terminal_error < 1e-3);
        for r in &ep.rows {
            assert!(r.x1.abs() < 1e-3 && r.x2.abs() < 1e-3 && r.x3.abs() < 1e-3);
        }
        assert_eq!(ep.rows.last().unwrap().done_reason, "horizon");
        let text = std::fs::read_to_string(&ep.path).unwrap();
        assert!(text.starts_with("t,x1,x2,x3,v1,v2,v3,r11,"));
    }
}
