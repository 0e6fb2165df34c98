//! Training loop and the noise-free evaluation protocol.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    encode, Algorithm, AgentMode, Policy, ReplayBuffer, RlError, SacAgent, SacConfig, Td3Agent, Td3Config,
    Transition, ACTION_DIM,
};
use crate::dynamics::{QuadrotorParams, State};
use crate::env::{sample_initial_state, DoneReason, EnvConfig, QuadEnv};
use crate::so3::Vec3;

/// Independent random streams derived from one run seed. Keeping them apart
/// means, for instance, that evaluation never shifts training randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Streams {
    Env,
    Init,
    Explore,
    Update,
    Eval,
    HeldOut,
}

impl Streams {
    pub fn rng(self, seed: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(self as u64);
        rng
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSpec {
    pub algo: Algorithm,
    pub mode: AgentMode,
    pub seed: u64,
    pub total_steps: usize,
    pub eval_interval: usize,
    pub eval_episodes: usize,
    /// Emit a checkpoint event every this many steps; zero disables.
    pub checkpoint_interval: usize,
    pub hidden_units: usize,
    pub env: EnvConfig,
    pub quad: QuadrotorParams,
    pub td3: Td3Config,
    pub sac: SacConfig,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            algo: Algorithm::Td3,
            mode: AgentMode::Equivariant,
            seed: 0,
            total_steps: 100_000,
            eval_interval: 5_000,
            eval_episodes: 10,
            checkpoint_interval: 0,
            hidden_units: 256,
            env: EnvConfig::default(),
            quad: QuadrotorParams::default(),
            td3: Td3Config::default(),
            sac: SacConfig::default(),
        }
    }
}

impl TrainSpec {
    pub fn validate(&self) -> Result<(), RlError> {
        self.env.validate()?;
        self.quad.validate().map_err(crate::env::EnvError::from)?;
        self.td3.validate()?;
        self.sac.validate()?;
        if self.eval_interval == 0 {
            return Err(RlError::InvalidConfig {
                name: "eval_interval",
                reason: "must be positive".into(),
            });
        }
        if self.eval_episodes == 0 {
            return Err(RlError::InvalidConfig {
                name: "eval_episodes",
                reason: "must be positive".into(),
            });
        }
        if self.hidden_units == 0 {
            return Err(RlError::InvalidConfig {
                name: "hidden_units",
                reason: "must be positive".into(),
            });
        }
        Ok(())
    }
}

/// A TD3 or SAC learner behind one interface.
#[derive(Debug, Clone)]
pub enum Agent {
    Td3(Td3Agent),
    Sac(SacAgent),
}

impl Agent {
    pub fn new<R: Rng + ?Sized>(spec: &TrainSpec, rng: &mut R) -> Result<Self, RlError> {
        let d = spec.mode.obs_dim();
        Ok(match spec.algo {
            Algorithm::Td3 => Agent::Td3(Td3Agent::new(d, spec.hidden_units, spec.td3, rng)?),
            Algorithm::Sac => Agent::Sac(SacAgent::new(d, spec.hidden_units, spec.sac, rng)?),
        })
    }

    fn schedule(&self) -> (usize, usize, usize) {
        match self {
            Agent::Td3(a) => {
                let c = a.config();
                (c.warmup_steps, c.batch_size, c.buffer_capacity)
            }
            Agent::Sac(a) => {
                let c = a.config();
                (c.warmup_steps, c.batch_size, c.buffer_capacity)
            }
        }
    }

    pub fn act_explore<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<[f64; ACTION_DIM], RlError> {
        match self {
            Agent::Td3(a) => a.act_explore(obs, rng),
            Agent::Sac(a) => a.act_explore(obs, rng),
        }
    }

    /// One gradient step on a fresh minibatch; returns the critic loss.
    pub fn update<R: Rng + ?Sized>(&mut self, buffer: &ReplayBuffer, rng: &mut R) -> Result<f64, RlError> {
        let (_, batch_size, _) = self.schedule();
        let Some(batch) = buffer.sample(batch_size, rng) else {
            return Ok(0.0);
        };
        Ok(match self {
            Agent::Td3(a) => a.update(&batch, rng)?.critic_loss,
            Agent::Sac(a) => a.update(&batch, rng)?.critic_loss,
        })
    }

    /// Snapshot of the current deterministic policy.
    pub fn policy(&self) -> Policy {
        let net = match self {
            Agent::Td3(a) => a.actor.clone(),
            Agent::Sac(a) => a.actor.clone(),
        };
        Policy::from_net(net).expect("agents build recognizable actors")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalStats {
    pub returns: Vec<f64>,
    pub mean_return: f64,
    /// Sample standard deviation (zero for a single episode).
    pub std_return: f64,
    pub terminal_positions: Vec<Vec3>,
    /// `‖x_T − x_d‖` per episode.
    pub terminal_errors: Vec<f64>,
    pub mean_terminal_error: f64,
    pub done_reasons: Vec<DoneReason>,
    pub position_bound_terminations: usize,
    pub episode_lengths: Vec<usize>,
}

pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Rolls out `policy` without noise from each given initial state.
pub fn evaluate_from(
    policy: &Policy,
    cfg: &EnvConfig,
    quad: &QuadrotorParams,
    initial_states: &[State],
) -> Result<EvalStats, RlError> {
    let mut env = QuadEnv::new(*cfg, *quad, 0)?;
    let mut returns = Vec::with_capacity(initial_states.len());
    let mut terminal_positions = Vec::new();
    let mut done_reasons = Vec::new();
    let mut episode_lengths = Vec::new();
    for s0 in initial_states {
        let mut s = env.reset_to(*s0);
        let mut ret = 0.0;
        loop {
            let u = policy.act(&s, cfg)?;
            let res = env.step(&u)?;
            ret += res.reward;
            s = res.next_state;
            if res.done {
                done_reasons.push(res.done_reason);
                break;
            }
        }
        returns.push(ret);
        terminal_positions.push(s.x);
        episode_lengths.push(env.steps());
    }
    let terminal_errors: Vec<f64> = terminal_positions.iter().map(|x| (x - cfg.target()).norm()).collect();
    let (mean_return, std_return) = mean_std(&returns);
    let (mean_terminal_error, _) = mean_std(&terminal_errors);
    Ok(EvalStats {
        mean_return,
        std_return,
        mean_terminal_error,
        position_bound_terminations: done_reasons.iter().filter(|r| **r == DoneReason::PositionBound).count(),
        returns,
        terminal_positions,
        terminal_errors,
        done_reasons,
        episode_lengths,
    })
}

/// Evaluates on `n_episodes` initial states drawn from `rng`.
pub fn evaluate<R: Rng + ?Sized>(
    policy: &Policy,
    cfg: &EnvConfig,
    quad: &QuadrotorParams,
    n_episodes: usize,
    rng: &mut R,
) -> Result<EvalStats, RlError> {
    let starts: Vec<State> = (0..n_episodes).map(|_| sample_initial_state(cfg, rng)).collect();
    evaluate_from(policy, cfg, quad, &starts)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalRecord {
    pub env_step: usize,
    pub mean_return: f64,
    pub std_return: f64,
    pub mean_terminal_error: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub enum TrainEvent<'a> {
    Eval { record: &'a EvalRecord, policy: &'a Policy },
    Checkpoint { env_step: usize, policy: &'a Policy },
}

#[derive(Debug, Clone)]
pub struct TrainLog {
    pub algo: Algorithm,
    pub mode: AgentMode,
    pub seed: u64,
    pub records: Vec<EvalRecord>,
    pub final_policy: Policy,
    /// Evaluation record and snapshot with the highest mean return.
    pub best: Option<(EvalRecord, Policy)>,
}

/// Trains one agent for `spec.total_steps` environment steps.
///
/// The first `warmup_steps` actions are uniform on `[−1, 1]⁴`; after that
/// the agent explores with its own noise and performs one update per step.
/// Every `eval_interval` steps the current policy is evaluated on the same
/// `eval_episodes` initial states.
pub fn train(spec: &TrainSpec, mut observer: impl FnMut(TrainEvent<'_>)) -> Result<TrainLog, RlError> {
    spec.validate()?;
    let started = Instant::now();
    let mut init_rng = Streams::Init.rng(spec.seed);
    let mut explore_rng = Streams::Explore.rng(spec.seed);
    let mut update_rng = Streams::Update.rng(spec.seed);
    let eval_starts: Vec<State> = {
        let mut rng = Streams::Eval.rng(spec.seed);
        (0..spec.eval_episodes).map(|_| sample_initial_state(&spec.env, &mut rng)).collect()
    };

    let mut agent = Agent::new(spec, &mut init_rng)?;
    let (warmup, _, capacity) = agent.schedule();
    let mut env = QuadEnv::with_rng(spec.env, spec.quad, Streams::Env.rng(spec.seed))?;
    let mut buffer = ReplayBuffer::new(spec.mode.obs_dim(), capacity)?;
    let mut records = Vec::new();
    let mut best: Option<(EvalRecord, Policy)> = None;

    let mut obs = encode(env.state(), spec.mode, &spec.env)?;
    for t in 0..spec.total_steps {
        let u: [f64; ACTION_DIM] = if t < warmup {
            std::array::from_fn(|_| explore_rng.random_range(-1.0..=1.0))
        } else {
            agent.act_explore(&obs, &mut explore_rng)?
        };
        let prev_thrusts = if env.steps() == 0 { None } else { Some(env.prev_action().thrusts) };
        let res = env.step(&u)?;
        let next_obs = encode(&res.next_state, spec.mode, &spec.env)?;
        buffer.push(&Transition {
            obs: std::mem::take(&mut obs),
            action: u,
            reward: res.reward,
            next_obs: next_obs.clone(),
            done: res.done_reason.is_terminal(),
            prev_thrusts: prev_thrusts.unwrap_or(res.action.thrusts),
        })?;
        obs = if res.done {
            let s = env.reset();
            encode(&s, spec.mode, &spec.env)?
        } else {
            next_obs
        };

        if t >= warmup {
            agent.update(&buffer, &mut update_rng)?;
        }

        let step = t + 1;
        if step % spec.eval_interval == 0 {
            let policy = agent.policy();
            let stats = evaluate_from(&policy, &spec.env, &spec.quad, &eval_starts)?;
            let record = EvalRecord {
                env_step: step,
                mean_return: stats.mean_return,
                std_return: stats.std_return,
                mean_terminal_error: stats.mean_terminal_error,
                wall_time_s: started.elapsed().as_secs_f64(),
            };
            observer(TrainEvent::Eval {
                record: &record,
                policy: &policy,
            });
            if best.as_ref().is_none_or(|(b, _)| record.mean_return > b.mean_return) {
                best = Some((record, policy));
            }
            records.push(record);
        }
        if spec.checkpoint_interval > 0 && step % spec.checkpoint_interval == 0 {
            let policy = agent.policy();
            observer(TrainEvent::Checkpoint {
                env_step: step,
                policy: &policy,
            });
        }
    }

    Ok(TrainLog {
        algo: spec.algo,
        mode: spec.mode,
        seed: spec.seed,
        records,
        final_policy: agent.policy(),
        best,
    })
}
