//! Run configuration files.
//!
//! One `key = value` per line in TOML syntax (`#` starts a comment, strings
//! are quoted, lists use brackets). Every key is optional; a missing key keeps
//! its default, an unknown key is an error. Sections are not used.
//!
//! ```text
//! algo = "td3"              # td3 | sac
//! mode = "equivariant"      # baseline | equivariant
//! seeds = [0, 1, 2]
//! total_steps = 100000
//! eval_interval = 5000
//! eval_episodes = 10
//! checkpoint_interval = 0   # 0 = only final and best snapshots
//! out_dir = "runs"
//! hidden_units = 256
//!
//! # shared by both algorithms
//! gamma = 0.99
//! tau = 0.005
//! batch_size = 256
//! warmup_steps = 1000
//! buffer_capacity = 1000000
//! actor_lr = 3e-4
//! critic_lr = 3e-4
//!
//! # td3
//! expl_noise = 0.1
//! target_noise = 0.2
//! target_noise_clip = 0.5
//! policy_delay = 2
//!
//! # sac
//! target_entropy = -4.0
//! init_alpha = 0.2
//! alpha_lr = 3e-4
//!
//! # environment
//! target = [0.0, 0.0, 0.0]
//! e_x_max = 3.0
//! c_x = 2.0
//! c_v = 0.15
//! c_omega = 0.2
//! c_a = 0.03
//! reward_scale = 0.1
//! dt = 0.01
//! max_steps = 500
//! init_pos_half_width = 1.5
//! init_vel_bound = 0.5
//! init_tilt_bound = 0.2
//! init_omega_bound = 0.2
//! v_max = 8.0
//! omega_max = 25.0
//!
//! # vehicle
//! mass = 1.0
//! inertia = [0.01, 0.01, 0.02]
//! gravity = 9.81
//! arm_length = 0.17
//! torque_coeff = 0.016
//! max_thrust = 9.81         # defaults to mass * gravity
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::dynamics::QuadrotorParams;
use crate::env::EnvConfig;
use crate::rl::{AgentMode, Algorithm, SacConfig, Td3Config, TrainSpec};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("config file {path} not found")]
    Missing { path: PathBuf },
    #[error("cannot read config file {path}: {reason}")]
    Unreadable { path: PathBuf, reason: String },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { key: String, line: usize },
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: String, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub algo: Algorithm,
    pub mode: AgentMode,
    pub seeds: Vec<u64>,
    pub total_steps: usize,
    pub eval_interval: usize,
    pub eval_episodes: usize,
    pub checkpoint_interval: usize,
    pub hidden_units: usize,
    pub out_dir: PathBuf,
    pub env: EnvConfig,
    pub quad: QuadrotorParams,
    pub td3: Td3Config,
    pub sac: SacConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            algo: Algorithm::Td3,
            mode: AgentMode::Equivariant,
            seeds: vec![0, 1, 2],
            total_steps: 100_000,
            eval_interval: 5_000,
            eval_episodes: 10,
            checkpoint_interval: 0,
            hidden_units: 256,
            out_dir: PathBuf::from("runs"),
            env: EnvConfig::default(),
            quad: QuadrotorParams::default(),
            td3: Td3Config::default(),
            sac: SacConfig::default(),
        }
    }
}

impl RunConfig {
    /// Training specification for one seed.
    pub fn spec(&self, seed: u64) -> TrainSpec {
        TrainSpec {
            algo: self.algo,
            mode: self.mode,
            seed,
            total_steps: self.total_steps,
            eval_interval: self.eval_interval,
            eval_episodes: self.eval_episodes,
            checkpoint_interval: self.checkpoint_interval,
            hidden_units: self.hidden_units,
            env: self.env,
            quad: self.quad,
            td3: self.td3,
            sac: self.sac,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |key: &str, reason: String| ConfigError::Invalid {
            key: key.to_string(),
            reason,
        };
        if self.seeds.is_empty() {
            return Err(invalid("seeds", "at least one seed is required".into()));
        }
        if self.eval_interval == 0 {
            return Err(invalid("eval_interval", "must be positive".into()));
        }
        if self.eval_interval > self.total_steps {
            return Err(invalid(
                "eval_interval",
                format!("{} exceeds total_steps = {}", self.eval_interval, self.total_steps),
            ));
        }
        self.spec(self.seeds[0]).validate().map_err(|e| match e {
            crate::rl::RlError::InvalidConfig { name, reason } => invalid(name, reason),
            crate::rl::RlError::Env(crate::env::EnvError::InvalidConfig { name, reason }) => invalid(name, reason),
            crate::rl::RlError::Env(crate::env::EnvError::Dynamics(
                crate::dynamics::DynamicsError::InvalidParams { name, reason },
            )) => invalid(name, reason),
            other => invalid("config", other.to_string()),
        })
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    algo: Option<String>,
    mode: Option<String>,
    seeds: Option<Vec<u64>>,
    total_steps: Option<usize>,
    eval_interval: Option<usize>,
    eval_episodes: Option<usize>,
    checkpoint_interval: Option<usize>,
    out_dir: Option<PathBuf>,
    hidden_units: Option<usize>,

    gamma: Option<f64>,
    tau: Option<f64>,
    batch_size: Option<usize>,
    warmup_steps: Option<usize>,
    buffer_capacity: Option<usize>,
    actor_lr: Option<f64>,
    critic_lr: Option<f64>,

    expl_noise: Option<f64>,
    target_noise: Option<f64>,
    target_noise_clip: Option<f64>,
    policy_delay: Option<usize>,

    target_entropy: Option<f64>,
    init_alpha: Option<f64>,
    alpha_lr: Option<f64>,

    target: Option<[f64; 3]>,
    e_x_max: Option<f64>,
    c_x: Option<f64>,
    c_v: Option<f64>,
    c_omega: Option<f64>,
    c_a: Option<f64>,
    reward_scale: Option<f64>,
    dt: Option<f64>,
    max_steps: Option<usize>,
    init_pos_half_width: Option<f64>,
    init_vel_bound: Option<f64>,
    init_tilt_bound: Option<f64>,
    init_omega_bound: Option<f64>,
    v_max: Option<f64>,
    omega_max: Option<f64>,

    mass: Option<f64>,
    inertia: Option<[f64; 3]>,
    gravity: Option<f64>,
    arm_length: Option<f64>,
    torque_coeff: Option<f64>,
    max_thrust: Option<f64>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn line_of_key(text: &str, key: &str) -> usize {
    text.lines()
        .position(|l| {
            let l = l.trim_start();
            l.strip_prefix(key)
                .is_some_and(|rest| rest.trim_start().starts_with('='))
        })
        .map_or(0, |i| i + 1)
}

/// Parses configuration text; see the module docs for the keys.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    if let Some(i) = text.lines().position(|l| l.trim_start().starts_with('[')) {
        return Err(ConfigError::Malformed {
            line: i + 1,
            message: "sections are not supported; use plain `key = value` lines".into(),
        });
    }
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let message = e.message().to_string();
        let line = e.span().map_or(0, |s| line_of(text, s.start));
        match message.strip_prefix("unknown field `").and_then(|m| m.split('`').next()) {
            Some(key) => ConfigError::UnknownKey {
                key: key.to_string(),
                line: if line > 0 { line } else { line_of_key(text, key) },
            },
            None => ConfigError::Malformed { line, message },
        }
    })?;

    let mut cfg = RunConfig::default();
    let parse_tag = |key: &str, v: &str| -> Result<(), ConfigError> {
        Err(ConfigError::Invalid {
            key: key.into(),
            reason: v.into(),
        })
    };
    if let Some(a) = raw.algo {
        match a.parse() {
            Ok(v) => cfg.algo = v,
            Err(e) => parse_tag("algo", &e)?,
        }
    }
    if let Some(m) = raw.mode {
        match m.parse() {
            Ok(v) => cfg.mode = v,
            Err(e) => parse_tag("mode", &e)?,
        }
    }
    set(&mut cfg.seeds, raw.seeds);
    set(&mut cfg.total_steps, raw.total_steps);
    set(&mut cfg.eval_interval, raw.eval_interval);
    set(&mut cfg.eval_episodes, raw.eval_episodes);
    set(&mut cfg.checkpoint_interval, raw.checkpoint_interval);
    set(&mut cfg.out_dir, raw.out_dir);
    set(&mut cfg.hidden_units, raw.hidden_units);

    let (td3, sac) = (&mut cfg.td3, &mut cfg.sac);
    for v in [&mut td3.gamma, &mut sac.gamma] {
        set(v, raw.gamma);
    }
    for v in [&mut td3.tau, &mut sac.tau] {
        set(v, raw.tau);
    }
    for v in [&mut td3.batch_size, &mut sac.batch_size] {
        set(v, raw.batch_size);
    }
    for v in [&mut td3.warmup_steps, &mut sac.warmup_steps] {
        set(v, raw.warmup_steps);
    }
    for v in [&mut td3.buffer_capacity, &mut sac.buffer_capacity] {
        set(v, raw.buffer_capacity);
    }
    for v in [&mut td3.actor_lr, &mut sac.actor_lr] {
        set(v, raw.actor_lr);
    }
    for v in [&mut td3.critic_lr, &mut sac.critic_lr] {
        set(v, raw.critic_lr);
    }
    set(&mut td3.expl_noise, raw.expl_noise);
    set(&mut td3.target_noise, raw.target_noise);
    set(&mut td3.target_noise_clip, raw.target_noise_clip);
    set(&mut td3.policy_delay, raw.policy_delay);
    set(&mut sac.target_entropy, raw.target_entropy);
    set(&mut sac.init_alpha, raw.init_alpha);
    set(&mut sac.alpha_lr, raw.alpha_lr);

    let env = &mut cfg.env;
    set(&mut env.target, raw.target);
    set(&mut env.e_x_max, raw.e_x_max);
    set(&mut env.c_x, raw.c_x);
    set(&mut env.c_v, raw.c_v);
    set(&mut env.c_omega, raw.c_omega);
    set(&mut env.c_a, raw.c_a);
    set(&mut env.reward_scale, raw.reward_scale);
    set(&mut env.dt, raw.dt);
    set(&mut env.max_steps, raw.max_steps);
    set(&mut env.init_pos_half_width, raw.init_pos_half_width);
    set(&mut env.init_vel_bound, raw.init_vel_bound);
    set(&mut env.init_tilt_bound, raw.init_tilt_bound);
    set(&mut env.init_omega_bound, raw.init_omega_bound);
    set(&mut env.v_max, raw.v_max);
    set(&mut env.omega_max, raw.omega_max);

    let quad = &mut cfg.quad;
    set(&mut quad.mass, raw.mass);
    set(&mut quad.inertia, raw.inertia);
    set(&mut quad.gravity, raw.gravity);
    set(&mut quad.arm_length, raw.arm_length);
    set(&mut quad.torque_coeff, raw.torque_coeff);
    quad.max_thrust = raw.max_thrust.unwrap_or(quad.mass * quad.gravity);

    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => ConfigError::Missing { path: path.into() },
        _ => ConfigError::Unreadable {
            path: path.into(),
            reason: e.to_string(),
        },
    })?;
    parse_config(&text)
}
