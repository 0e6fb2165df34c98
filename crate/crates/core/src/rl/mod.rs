//! Off-policy actor-critic training on the quadrotor task.
//!
//! Both agent modes share every hyperparameter, update rule and random
//! stream; they differ only in [`encode`]. In equivariant mode the network
//! sees the orbit representative of the position-error state, so every
//! network built on top of it is invariant under rotations about the
//! vertical axis through the target.

mod buffer;
mod policy;
mod sac;
mod td3;
mod train;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::dynamics::State;
use crate::env::{EnvConfig, EnvError};
use crate::nn::NnError;
use crate::symmetry::{reduce_state, SymmetryError, REDUCED_DIM};

pub use buffer::{Batch, ReplayBuffer, Transition};
pub use policy::{Policy, PolicyKind};
pub use sac::{SacAgent, SacConfig, SacDiagnostics};
pub use td3::{Td3Agent, Td3Config, Td3Diagnostics};
pub use train::{
    evaluate, evaluate_from, train, Agent, EvalRecord, EvalStats, Streams, TrainEvent, TrainLog, TrainSpec,
};

pub const ACTION_DIM: usize = 4;
pub const BASELINE_DIM: usize = 18;

#[derive(Debug, Error)]
pub enum RlError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Symmetry(#[from] SymmetryError),
    #[error("non-finite {0} loss")]
    NonFiniteLoss(&'static str),
    #[error("invalid setting `{name}`: {reason}")]
    InvalidConfig { name: &'static str, reason: String },
    #[error("snapshot with input {input} / output {output} does not describe a known policy")]
    UnknownArchitecture { input: usize, output: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AgentMode {
    Baseline,
    Equivariant,
}

impl AgentMode {
    pub const ALL: [AgentMode; 2] = [AgentMode::Baseline, AgentMode::Equivariant];

    pub fn as_str(&self) -> &'static str {
        match self {
            AgentMode::Baseline => "baseline",
            AgentMode::Equivariant => "equivariant",
        }
    }

    pub fn obs_dim(&self) -> usize {
        match self {
            AgentMode::Baseline => BASELINE_DIM,
            AgentMode::Equivariant => REDUCED_DIM,
        }
    }

    pub fn from_obs_dim(dim: usize) -> Option<Self> {
        match dim {
            BASELINE_DIM => Some(AgentMode::Baseline),
            REDUCED_DIM => Some(AgentMode::Equivariant),
            _ => None,
        }
    }
}

impl fmt::Display for AgentMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgentMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline" => Ok(AgentMode::Baseline),
            "equivariant" => Ok(AgentMode::Equivariant),
            other => Err(format!("unknown mode `{other}` (expected baseline or equivariant)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    Td3,
    Sac,
}

impl Algorithm {
    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Td3 => "td3",
            Algorithm::Sac => "sac",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "td3" => Ok(Algorithm::Td3),
            "sac" => Ok(Algorithm::Sac),
            other => Err(format!("unknown algorithm `{other}` (expected td3 or sac)")),
        }
    }
}

/// Network input for state `s`.
///
/// Equivariant: the 17-entry representative of the position-error state with
/// `[x]₁, [x]₃` divided by `e_x_max`. Baseline: `(x − x_d)/e_x_max`, `v`,
/// `R` row-major, `Ω`.
pub fn encode(s: &State, mode: AgentMode, cfg: &EnvConfig) -> Result<Vec<f64>, RlError> {
    let err = State {
        x: s.x - cfg.target(),
        ..*s
    };
    match mode {
        AgentMode::Equivariant => {
            let (rep, _) = reduce_state(&err)?;
            let mut out = rep.0.to_vec();
            out[0] /= cfg.e_x_max;
            out[1] /= cfg.e_x_max;
            Ok(out)
        }
        AgentMode::Baseline => {
            let mut out = Vec::with_capacity(BASELINE_DIM);
            out.extend((err.x / cfg.e_x_max).iter());
            out.extend(err.v.iter());
            out.extend_from_slice(&err.r.to_row_major());
            out.extend(err.omega.iter());
            Ok(out)
        }
    }
}
