//! Episodic position-stabilization task built on the rigid-body model.
//!
//! Actions arrive as actor outputs in `[−1, 1]⁴` and are mapped affinely to
//! rotor thrusts in `[0, T_max]`. The per-step reward is
//!
//! ```text
//! r = c_x (1 − ‖e′_x‖) − c_v ‖v‖ − c_Ω ‖Ω‖ − c_a ‖a_t − a_{t−1}‖,   e′_x = (x − x_d) / e_x_max
//! ```
//!
//! evaluated on the pre-step state, then mapped affinely from its analytic
//! range `[r_min, c_x]` onto `[0, 1]` and multiplied by `reward_scale`.
//! Each penalty norm saturates at its bound (`1`, `v_max`, `Ω_max`,
//! `2 T_max`), which keeps the scaled reward inside `[0, reward_scale]`
//! even at the corners of the termination box where `‖e′_x‖` can exceed one.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{rk4_step, Action, DynamicsError, QuadrotorParams, State};
use crate::so3::{rot_x, rot_y, rot_z, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("simulation fault: {0}")]
    Dynamics(#[from] DynamicsError),
    #[error("invalid environment setting `{name}`: {reason}")]
    InvalidConfig { name: &'static str, reason: String },
    #[error("episode already finished; call reset first")]
    EpisodeFinished,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    /// Target position `x_d`, m.
    pub target: [f64; 3],
    /// Per-axis half-width of the allowed box around the target, m.
    pub e_x_max: f64,
    pub c_x: f64,
    pub c_v: f64,
    pub c_omega: f64,
    pub c_a: f64,
    pub reward_scale: f64,
    /// Control period, s.
    pub dt: f64,
    pub max_steps: usize,
    /// Initial position offset drawn from `[−w, w]³` around the target.
    pub init_pos_half_width: f64,
    pub init_vel_bound: f64,
    /// Roll/pitch perturbation bound, rad.
    pub init_tilt_bound: f64,
    pub init_omega_bound: f64,
    pub v_max: f64,
    pub omega_max: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            target: [0.0; 3],
            e_x_max: 3.0,
            c_x: 2.0,
            c_v: 0.15,
            c_omega: 0.2,
            c_a: 0.03,
            reward_scale: 0.1,
            dt: 0.01,
            max_steps: 500,
            init_pos_half_width: 1.5,
            init_vel_bound: 0.5,
            init_tilt_bound: 0.2,
            init_omega_bound: 0.2,
            v_max: 8.0,
            omega_max: 25.0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |name, reason: &str| {
            Err(EnvError::InvalidConfig {
                name,
                reason: reason.to_string(),
            })
        };
        if !self.target.iter().all(|x| x.is_finite()) {
            return bad("target", "must be finite");
        }
        if !(self.e_x_max > 0.0) {
            return bad("e_x_max", "must be positive");
        }
        for (name, c) in [
            ("c_x", self.c_x),
            ("c_v", self.c_v),
            ("c_omega", self.c_omega),
            ("c_a", self.c_a),
        ] {
            if !(c >= 0.0 && c.is_finite()) {
                return bad(name, "must be non-negative");
            }
        }
        if !(self.reward_scale > 0.0) {
            return bad("reward_scale", "must be positive");
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt", "must be positive");
        }
        if self.max_steps < 1 {
            return bad("max_steps", "must be at least 1");
        }
        if !(self.v_max > 0.0) {
            return bad("v_max", "must be positive");
        }
        if !(self.omega_max > 0.0) {
            return bad("omega_max", "must be positive");
        }
        if !(self.init_pos_half_width >= 0.0 && self.init_pos_half_width < self.e_x_max) {
            return bad("init_pos_half_width", "must lie in [0, e_x_max)");
        }
        for (name, b) in [
            ("init_vel_bound", self.init_vel_bound),
            ("init_tilt_bound", self.init_tilt_bound),
            ("init_omega_bound", self.init_omega_bound),
        ] {
            if !(b >= 0.0 && b.is_finite()) {
                return bad(name, "must be non-negative");
            }
        }
        Ok(())
    }

    pub fn target(&self) -> Vec3 {
        Vec3::from(self.target)
    }

    /// Lower anchor of the reward normalization.
    pub fn raw_reward_min(&self, p: &QuadrotorParams) -> f64 {
        -(self.c_v * self.v_max + self.c_omega * self.omega_max + self.c_a * 2.0 * p.max_thrust)
    }

    pub fn raw_reward_max(&self) -> f64 {
        self.c_x
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DoneReason {
    None,
    PositionBound,
    VelocityBound,
    OmegaBound,
    Horizon,
}

impl DoneReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            DoneReason::None => "none",
            DoneReason::PositionBound => "position_bound",
            DoneReason::VelocityBound => "velocity_bound",
            DoneReason::OmegaBound => "omega_bound",
            DoneReason::Horizon => "horizon",
        }
    }

    /// True for bound violations, which end the episode for good; the
    /// horizon is a time limit and must not cut off bootstrapping.
    pub fn is_terminal(&self) -> bool {
        matches!(
            self,
            DoneReason::PositionBound | DoneReason::VelocityBound | DoneReason::OmegaBound
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub next_state: State,
    /// Thrusts actually applied during the step.
    pub action: Action,
    pub reward: f64,
    pub done: bool,
    pub done_reason: DoneReason,
}

/// `Tᵢ = (uᵢ + 1)/2 · T_max`, with `uᵢ` clipped to `[−1, 1]`.
pub fn actor_to_thrusts(u: &[f64; 4], p: &QuadrotorParams) -> Action {
    Action::new(u.map(|ui| 0.5 * (ui.clamp(-1.0, 1.0) + 1.0) * p.max_thrust))
}

/// Inverse of [`actor_to_thrusts`] on the feasible range.
pub fn thrusts_to_actor(a: &Action, p: &QuadrotorParams) -> [f64; 4] {
    a.thrusts.map(|t| (2.0 * t / p.max_thrust - 1.0).clamp(-1.0, 1.0))
}

/// Unnormalized stage reward with saturated penalty norms.
pub fn raw_reward(s: &State, a: &Action, a_prev: &Action, cfg: &EnvConfig, p: &QuadrotorParams) -> f64 {
    let e = ((s.x - cfg.target()) / cfg.e_x_max).norm().min(1.0);
    let v = s.v.norm().min(cfg.v_max);
    let w = s.omega.norm().min(cfg.omega_max);
    let da = a.distance(a_prev).min(2.0 * p.max_thrust);
    cfg.c_x * (1.0 - e) - cfg.c_v * v - cfg.c_omega * w - cfg.c_a * da
}

/// Normalized and scaled reward, always within `[0, reward_scale]`.
pub fn reward(s: &State, a: &Action, a_prev: &Action, cfg: &EnvConfig, p: &QuadrotorParams) -> f64 {
    let lo = cfg.raw_reward_min(p);
    let hi = cfg.raw_reward_max();
    let r = raw_reward(s, a, a_prev, cfg, p);
    cfg.reward_scale * ((r - lo) / (hi - lo))
}

/// Draws an initial state: position uniform in the cube around the target,
/// small random velocities and body rates, arbitrary heading with a small
/// roll/pitch tilt.
pub fn sample_initial_state<R: Rng + ?Sized>(cfg: &EnvConfig, rng: &mut R) -> State {
    let mut sym = |b: f64| if b > 0.0 { rng.random_range(-b..=b) } else { 0.0 };
    let w = cfg.init_pos_half_width;
    let x = cfg.target() + Vec3::new(sym(w), sym(w), sym(w));
    let vb = cfg.init_vel_bound;
    let v = Vec3::new(sym(vb), sym(vb), sym(vb));
    let tb = cfg.init_tilt_bound;
    let (roll, pitch) = (sym(tb), sym(tb));
    let heading = sym(PI);
    let ob = cfg.init_omega_bound;
    let omega = Vec3::new(sym(ob), sym(ob), sym(ob));
    State {
        x,
        v,
        r: rot_z(heading) * rot_x(roll) * rot_y(pitch),
        omega,
    }
}

/// Initial state together with the placeholder previous action (hover).
pub fn reset<R: Rng + ?Sized>(cfg: &EnvConfig, p: &QuadrotorParams, rng: &mut R) -> (State, Action) {
    (sample_initial_state(cfg, rng), Action::hover(p))
}

/// Why `s` ends the episode, ignoring the horizon.
pub fn bound_violation(s: &State, cfg: &EnvConfig) -> DoneReason {
    let e = s.x - cfg.target();
    if e.iter().any(|c| c.abs() > cfg.e_x_max) {
        DoneReason::PositionBound
    } else if s.v.norm() > cfg.v_max {
        DoneReason::VelocityBound
    } else if s.omega.norm() > cfg.omega_max {
        DoneReason::OmegaBound
    } else {
        DoneReason::None
    }
}

/// One environment transition. `t` is the zero-based index of this step
/// within the episode.
pub fn step(
    s: &State,
    u: &[f64; 4],
    a_prev: &Action,
    t: usize,
    cfg: &EnvConfig,
    p: &QuadrotorParams,
) -> Result<StepResult, EnvError> {
    let a = actor_to_thrusts(u, p);
    let r = reward(s, &a, a_prev, cfg, p);
    let next_state = rk4_step(s, &a, cfg.dt, p)?;
    let mut done_reason = bound_violation(&next_state, cfg);
    if done_reason == DoneReason::None && t + 1 >= cfg.max_steps {
        done_reason = DoneReason::Horizon;
    }
    Ok(StepResult {
        next_state,
        action: a,
        reward: r,
        done: done_reason != DoneReason::None,
        done_reason,
    })
}

/// Stateful wrapper owning the episode state, step counter and RNG.
#[derive(Debug, Clone)]
pub struct QuadEnv {
    cfg: EnvConfig,
    params: QuadrotorParams,
    rng: ChaCha8Rng,
    state: State,
    prev_action: Action,
    t: usize,
    finished: bool,
}

impl QuadEnv {
    pub fn new(cfg: EnvConfig, params: QuadrotorParams, seed: u64) -> Result<Self, EnvError> {
        Self::with_rng(cfg, params, ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn with_rng(cfg: EnvConfig, params: QuadrotorParams, rng: ChaCha8Rng) -> Result<Self, EnvError> {
        cfg.validate()?;
        params.validate()?;
        let mut env = Self {
            cfg,
            params,
            rng,
            state: State::at_rest(cfg.target()),
            prev_action: Action::hover(&params),
            t: 0,
            finished: false,
        };
        env.reset();
        Ok(env)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn params(&self) -> &QuadrotorParams {
        &self.params
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    pub fn prev_action(&self) -> &Action {
        &self.prev_action
    }

    /// Steps taken in the current episode.
    pub fn steps(&self) -> usize {
        self.t
    }

    pub fn reset(&mut self) -> State {
        let (s, a) = reset(&self.cfg, &self.params, &mut self.rng);
        self.reset_to_with(s, a)
    }

    /// Starts an episode from a given state.
    pub fn reset_to(&mut self, s: State) -> State {
        let hover = Action::hover(&self.params);
        self.reset_to_with(s, hover)
    }

    fn reset_to_with(&mut self, s: State, prev: Action) -> State {
        self.state = s;
        self.prev_action = prev;
        self.t = 0;
        self.finished = false;
        s
    }

    /// Advances by one control period. On the first step of an episode the
    /// previous action is taken to be the current one, so the rate penalty
    /// starts at zero.
    pub fn step(&mut self, u: &[f64; 4]) -> Result<StepResult, EnvError> {
        if self.finished {
            return Err(EnvError::EpisodeFinished);
        }
        if self.t == 0 {
            self.prev_action = actor_to_thrusts(u, &self.params);
        }
        let res = step(&self.state, u, &self.prev_action, self.t, &self.cfg, &self.params);
        let res = match res {
            Ok(r) => r,
            Err(e) => {
                self.finished = true;
                return Err(e);
            }
        };
        self.state = res.next_state;
        self.prev_action = res.action;
        self.t += 1;
        self.finished = res.done;
        Ok(res)
    }
}
