//! Rigid-body quadrotor model: thrust mixer, continuous-time equations of
//! motion, and a fixed-step RK4 discretization.
//!
//! Frames follow the usual geometric-control convention: the third inertial
//! axis points along gravity (down), and the body third axis points down when
//! hovering, so thrust acts along `−R e₃`.

use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::so3::{hat, reorthonormalize, Mat3, RotationMatrix, So3Error, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("integration diverged: non-finite state after RK4 step")]
    Diverged,
    #[error("attitude left SO(3) during integration: {0}")]
    AttitudeDrift(#[from] So3Error),
    #[error("invalid quadrotor parameter `{name}`: {reason}")]
    InvalidParams { name: &'static str, reason: String },
    #[error("time step must be positive and finite, got {0}")]
    InvalidStep(f64),
}

/// Physical constants of the vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadrotorParams {
    /// kg
    pub mass: f64,
    /// Diagonal of the body inertia matrix, kg·m².
    pub inertia: [f64; 3],
    /// m/s²
    pub gravity: f64,
    /// Rotor distance from the third body axis, m.
    pub arm_length: f64,
    /// Reactive torque per unit thrust, m.
    pub torque_coeff: f64,
    /// Per-rotor thrust ceiling, N.
    pub max_thrust: f64,
}

impl Default for QuadrotorParams {
    fn default() -> Self {
        let mass = 1.0;
        let gravity = 9.81;
        Self {
            mass,
            inertia: [0.01, 0.01, 0.02],
            gravity,
            arm_length: 0.17,
            torque_coeff: 0.016,
            // hover (m g / 4) sits at a quarter of the actuator range
            max_thrust: mass * gravity,
        }
    }
}

impl QuadrotorParams {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let bad = |name, reason: &str| {
            Err(DynamicsError::InvalidParams {
                name,
                reason: reason.to_string(),
            })
        };
        let finite = [
            self.mass,
            self.gravity,
            self.arm_length,
            self.torque_coeff,
            self.max_thrust,
        ]
        .iter()
        .chain(self.inertia.iter())
        .all(|x| x.is_finite());
        if !finite {
            return bad("params", "all values must be finite");
        }
        if self.mass <= 0.0 {
            return bad("mass", "must be positive");
        }
        if self.inertia.iter().any(|&j| j <= 0.0) {
            return bad("inertia", "diagonal entries must be positive");
        }
        if self.arm_length <= 0.0 {
            return bad("arm_length", "must be positive");
        }
        if self.torque_coeff <= 0.0 {
            return bad("torque_coeff", "must be positive");
        }
        if self.max_thrust <= self.hover_thrust() {
            return bad("max_thrust", "must exceed the per-rotor hover thrust m·g/4");
        }
        Ok(())
    }

    pub fn inertia_matrix(&self) -> Mat3 {
        Mat3::from_diagonal(&Vec3::from(self.inertia))
    }

    /// Per-rotor thrust that balances gravity.
    pub fn hover_thrust(&self) -> f64 {
        self.mass * self.gravity / 4.0
    }

    /// 4×4 matrix taking `(T₁..T₄)` to `(f, M₁, M₂, M₃)`.
    pub fn mixer_matrix(&self) -> Matrix4<f64> {
        let d = self.arm_length;
        let c = self.torque_coeff;
        Matrix4::new(
            1.0, 1.0, 1.0, 1.0, //
            0.0, -d, 0.0, d, //
            d, 0.0, -d, 0.0, //
            c, -c, c, -c,
        )
    }
}

/// Quadrotor configuration `(x, v, R, Ω)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct State {
    pub x: Vec3,
    pub v: Vec3,
    pub r: RotationMatrix,
    /// Body-frame angular velocity.
    pub omega: Vec3,
}

impl State {
    /// Level hover at `x` with zero velocities.
    pub fn at_rest(x: Vec3) -> Self {
        Self {
            x,
            v: Vec3::zeros(),
            r: RotationMatrix::identity(),
            omega: Vec3::zeros(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().all(|a| a.is_finite())
            && self.v.iter().all(|a| a.is_finite())
            && self.omega.iter().all(|a| a.is_finite())
            && self.r.matrix().iter().all(|a| a.is_finite())
    }

    /// Largest componentwise difference over all eighteen entries.
    pub fn max_abs_diff(&self, other: &State) -> f64 {
        (self.x - other.x)
            .amax()
            .max((self.v - other.v).amax())
            .max((self.r.matrix() - other.r.matrix()).amax())
            .max((self.omega - other.omega).amax())
    }
}

/// Rotor thrusts `(T₁, T₂, T₃, T₄)` in newtons.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Action {
    pub thrusts: [f64; 4],
}

impl Action {
    pub fn new(thrusts: [f64; 4]) -> Self {
        Self { thrusts }
    }

    pub fn hover(p: &QuadrotorParams) -> Self {
        Self::new([p.hover_thrust(); 4])
    }

    pub fn clamped(&self, p: &QuadrotorParams) -> Self {
        Self::new(self.thrusts.map(|t| t.clamp(0.0, p.max_thrust)))
    }

    pub fn is_feasible(&self, p: &QuadrotorParams) -> bool {
        self.thrusts.iter().all(|&t| (0.0..=p.max_thrust).contains(&t))
    }

    /// Euclidean distance between two thrust vectors.
    pub fn distance(&self, other: &Action) -> f64 {
        self.thrusts
            .iter()
            .zip(other.thrusts.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Total thrust and body moment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wrench {
    pub thrust: f64,
    pub moment: Vec3,
}

/// Unconstrained 18-dimensional state used inside the integrator, where the
/// attitude block is an arbitrary matrix between RK stages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateVector {
    pub x: Vec3,
    pub v: Vec3,
    pub r: Mat3,
    pub omega: Vec3,
}

impl From<&State> for StateVector {
    fn from(s: &State) -> Self {
        Self {
            x: s.x,
            v: s.v,
            r: *s.r.matrix(),
            omega: s.omega,
        }
    }
}

/// Time derivative of the state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDeriv {
    pub x_dot: Vec3,
    pub v_dot: Vec3,
    pub r_dot: Mat3,
    pub omega_dot: Vec3,
}

impl StateVector {
    fn advanced(&self, k: &StateDeriv, h: f64) -> StateVector {
        StateVector {
            x: self.x + k.x_dot * h,
            v: self.v + k.v_dot * h,
            r: self.r + k.r_dot * h,
            omega: self.omega + k.omega_dot * h,
        }
    }
}

/// Right-hand side `ṡ = F(s, a)` expressed on the unconstrained state.
pub type RigidBodyRhs = fn(&StateVector, &Wrench, &QuadrotorParams) -> StateDeriv;

/// Thrust mixer: `f = ΣTᵢ`, `M₁ = d(T₄ − T₂)`, `M₂ = d(T₁ − T₃)`,
/// `M₃ = c_τf (T₁ − T₂ + T₃ − T₄)`.
pub fn mixer(a: &Action, p: &QuadrotorParams) -> Wrench {
    let [t1, t2, t3, t4] = a.thrusts;
    let d = p.arm_length;
    let c = p.torque_coeff;
    Wrench {
        thrust: t1 + t2 + t3 + t4,
        moment: Vec3::new(-d * t2 + d * t4, d * t1 - d * t3, c * (t1 - t2 + t3 - t4)),
    }
}

/// Closed-form inverse of [`mixer`]. The result is not clamped, so large
/// moments can produce negative thrusts.
pub fn inverse_mixer(w: &Wrench, p: &QuadrotorParams) -> Action {
    let d = p.arm_length;
    let c = p.torque_coeff;
    let odd = 0.5 * (w.thrust + w.moment.z / c); // T₁ + T₃
    let even = 0.5 * (w.thrust - w.moment.z / c); // T₂ + T₄
    Action::new([
        0.5 * (odd + w.moment.y / d),
        0.5 * (even - w.moment.x / d),
        0.5 * (odd - w.moment.y / d),
        0.5 * (even + w.moment.x / d),
    ])
}

/// Equations of motion on the unconstrained state.
pub fn rigid_body_rhs(s: &StateVector, w: &Wrench, p: &QuadrotorParams) -> StateDeriv {
    let e3 = Vec3::z();
    let j = p.inertia_matrix();
    let gyro = s.omega.cross(&(j * s.omega));
    let omega_dot = Vec3::new(
        (w.moment.x - gyro.x) / p.inertia[0],
        (w.moment.y - gyro.y) / p.inertia[1],
        (w.moment.z - gyro.z) / p.inertia[2],
    );
    StateDeriv {
        x_dot: s.v,
        v_dot: e3 * p.gravity - s.r * e3 * (w.thrust / p.mass),
        r_dot: s.r * hat(&s.omega),
        omega_dot,
    }
}

/// `ẋ = v`, `m v̇ = m g e₃ − f R e₃`, `Ṙ = R Ω̂`, `J Ω̇ = M − Ω × J Ω`.
pub fn dynamics_deriv(s: &State, a: &Action, p: &QuadrotorParams) -> StateDeriv {
    rigid_body_rhs(&StateVector::from(s), &mixer(a, p), p)
}

/// One classical RK4 step with the action held constant over `dt`,
/// followed by projection of the attitude back onto SO(3).
pub fn rk4_step(s: &State, a: &Action, dt: f64, p: &QuadrotorParams) -> Result<State, DynamicsError> {
    rk4_step_with(rigid_body_rhs, s, a, dt, p)
}

/// [`rk4_step`] with a caller-supplied right-hand side.
pub fn rk4_step_with(
    rhs: RigidBodyRhs,
    s: &State,
    a: &Action,
    dt: f64,
    p: &QuadrotorParams,
) -> Result<State, DynamicsError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(DynamicsError::InvalidStep(dt));
    }
    let w = mixer(a, p);
    let y = StateVector::from(s);
    let k1 = rhs(&y, &w, p);
    let k2 = rhs(&y.advanced(&k1, 0.5 * dt), &w, p);
    let k3 = rhs(&y.advanced(&k2, 0.5 * dt), &w, p);
    let k4 = rhs(&y.advanced(&k3, dt), &w, p);
    let h6 = dt / 6.0;
    let next = StateVector {
        x: y.x + (k1.x_dot + (k2.x_dot + k3.x_dot) * 2.0 + k4.x_dot) * h6,
        v: y.v + (k1.v_dot + (k2.v_dot + k3.v_dot) * 2.0 + k4.v_dot) * h6,
        r: y.r + (k1.r_dot + (k2.r_dot + k3.r_dot) * 2.0 + k4.r_dot) * h6,
        omega: y.omega + (k1.omega_dot + (k2.omega_dot + k3.omega_dot) * 2.0 + k4.omega_dot) * h6,
    };
    let finite = next.x.iter().all(|a| a.is_finite())
        && next.v.iter().all(|a| a.is_finite())
        && next.r.iter().all(|a| a.is_finite())
        && next.omega.iter().all(|a| a.is_finite());
    if !finite {
        return Err(DynamicsError::Diverged);
    }
    Ok(State {
        x: next.x,
        v: next.v,
        r: reorthonormalize(&next.r)?,
        omega: next.omega,
    })
}
