use std::path::Path;

use super::{encode, AgentMode, RlError, ACTION_DIM};
use crate::dynamics::{inverse_mixer, QuadrotorParams, State, Wrench};
use crate::env::{thrusts_to_actor, EnvConfig};
use crate::nn::{Activation, GaussianHead, Mlp};
use crate::so3::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    /// Tanh-output actor.
    Deterministic,
    /// `[mean | log_std]` actor, deployed as `tanh(mean)`.
    Gaussian,
}

/// Deployable noise-free policy: a network snapshot plus how to read it.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    net: Mlp,
    mode: AgentMode,
    kind: PolicyKind,
}

impl Policy {
    /// Infers mode and kind from the network's input and output widths.
    pub fn from_net(net: Mlp) -> Result<Self, RlError> {
        let (input, output) = (net.input_dim(), net.output_dim());
        let unknown = RlError::UnknownArchitecture { input, output };
        let mode = AgentMode::from_obs_dim(input).ok_or(unknown)?;
        let last = net.layers().last().expect("networks have layers").activation;
        let kind = match (output, last) {
            (ACTION_DIM, Activation::Tanh) => PolicyKind::Deterministic,
            (o, Activation::Identity) if o == 2 * ACTION_DIM => PolicyKind::Gaussian,
            _ => return Err(RlError::UnknownArchitecture { input, output }),
        };
        Ok(Self { net, mode, kind })
    }

    /// Constant policy commanding the hover wrench through the inverse
    /// mixer, mapped to actor scale.
    pub fn hover_oracle(mode: AgentMode, p: &QuadrotorParams) -> Self {
        let hidden = 8;
        let mut net = Mlp::new(
            &[mode.obs_dim(), hidden, hidden, ACTION_DIM],
            &[Activation::Relu, Activation::Relu, Activation::Tanh],
        )
        .expect("valid shape");
        let wrench = Wrench {
            thrust: p.mass * p.gravity,
            moment: Vec3::zeros(),
        };
        let u = thrusts_to_actor(&inverse_mixer(&wrench, p).clamped(p), p);
        let bias = net.bias_range(2);
        for (b, ui) in net.params_mut()[bias].iter_mut().zip(u) {
            *b = ui.clamp(-1.0 + 1e-12, 1.0 - 1e-12).atanh();
        }
        Self {
            net,
            mode,
            kind: PolicyKind::Deterministic,
        }
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn mode(&self) -> AgentMode {
        self.mode
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn act_obs(&self, obs: &[f64]) -> Result<[f64; ACTION_DIM], RlError> {
        let out = self.net.predict_one(obs)?;
        let a = match self.kind {
            PolicyKind::Deterministic => out,
            PolicyKind::Gaussian => GaussianHead::from_raw(&out).deterministic(),
        };
        Ok(a.try_into().expect("four actions"))
    }

    pub fn act(&self, s: &State, cfg: &EnvConfig) -> Result<[f64; ACTION_DIM], RlError> {
        self.act_obs(&encode(s, self.mode, cfg)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), RlError> {
        Ok(self.net.save(path)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RlError> {
        Self::from_net(Mlp::load(path)?)
    }
}
