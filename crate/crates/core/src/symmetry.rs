//! Rotations about the gravity axis as a symmetry of the quadrotor MDP, and
//! the quotient map that picks one representative per orbit.
//!
//! The group acts on `(x, v, R)` by left multiplication with `exp(θ ê₃)` and
//! leaves the body-frame quantities `Ω` and the rotor thrusts untouched. The
//! representative of an orbit is the member whose horizontal position lies
//! on the non-negative first axis, so its second position coordinate is
//! zero and can be dropped; what remains is a 17-entry vector.

use thiserror::Error;

use crate::dynamics::{Action, State};
use crate::so3::{rot_z, wrap_angle, RotationMatrix, So3Error, Vec3};

/// Largest `|x₂|` tolerated after rotating onto the representative ray.
pub const REPRESENTATIVE_TOLERANCE: f64 = 1e-9;

pub const REDUCED_DIM: usize = 17;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SymmetryError {
    #[error("rotated second position coordinate is {0:e}, expected zero")]
    NonZeroLateral(f64),
    #[error("reduced state does not hold a rotation: {0}")]
    BadAttitude(#[from] So3Error),
}

/// Element of S¹, stored as an angle in `(−π, π]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupElement {
    theta: f64,
}

impl GroupElement {
    pub fn new(theta: f64) -> Self {
        Self {
            theta: wrap_angle(theta),
        }
    }

    pub fn identity() -> Self {
        Self { theta: 0.0 }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn inverse(&self) -> Self {
        Self::new(-self.theta)
    }

    pub fn compose(&self, other: &GroupElement) -> Self {
        Self::new(self.theta + other.theta)
    }

    pub fn rotation(&self) -> RotationMatrix {
        rot_z(self.theta)
    }
}

/// `(exp(θê₃)x, exp(θê₃)v, exp(θê₃)R, Ω)`.
pub fn act_on_state(s: &State, g: &GroupElement) -> State {
    let q = g.rotation();
    State {
        x: q * s.x,
        v: q * s.v,
        r: q * s.r,
        omega: s.omega,
    }
}

/// Same rotation, but about the vertical line through `pivot`.
pub fn act_on_state_about(s: &State, g: &GroupElement, pivot: &Vec3) -> State {
    let mut shifted = *s;
    shifted.x -= pivot;
    let mut out = act_on_state(&shifted, g);
    out.x += pivot;
    out
}

/// Thrusts are body-frame quantities, so the group acts trivially.
pub fn act_on_action(a: &Action, _g: &GroupElement) -> Action {
    *a
}

/// `[θ] = −atan2(x₂, x₁)`.
///
/// When the horizontal position is exactly zero the whole orbit shares it,
/// so the angle is taken from the next horizontal direction that rotates
/// with the state: the velocity, then the body axis `R e₁` (or `R e₂` when
/// `R e₁` is vertical). This keeps the representative constant on every
/// orbit. The caller passes the state with position measured from the
/// target.
pub fn representative_angle(s: &State) -> GroupElement {
    let m = s.r.matrix();
    let candidates = [
        (s.x.x, s.x.y),
        (s.v.x, s.v.y),
        (m[(0, 0)], m[(1, 0)]),
        (m[(0, 1)], m[(1, 1)]),
    ];
    for (a, b) in candidates {
        if a != 0.0 || b != 0.0 {
            return GroupElement::new(-b.atan2(a));
        }
    }
    GroupElement::identity()
}

/// Position-only form: `θ = 0` when the horizontal position is zero.
pub fn representative_angle_of(x: &Vec3) -> GroupElement {
    if x.x == 0.0 && x.y == 0.0 {
        return GroupElement::identity();
    }
    GroupElement::new(-x.y.atan2(x.x))
}

/// Orbit representative packed as
/// `[x]₁, [x]₃, [v]₁..₃, [R]₁₁..[R]₃₃ (row-major), [Ω]₁..₃`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedState(pub [f64; REDUCED_DIM]);

impl ReducedState {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn position(&self) -> Vec3 {
        Vec3::new(self.0[0], 0.0, self.0[1])
    }

    pub fn velocity(&self) -> Vec3 {
        Vec3::new(self.0[2], self.0[3], self.0[4])
    }

    pub fn omega(&self) -> Vec3 {
        Vec3::new(self.0[14], self.0[15], self.0[16])
    }

    /// Reassembles the attitude block.
    pub fn rotation(&self) -> Result<RotationMatrix, SymmetryError> {
        let m = nalgebra::Matrix3::from_row_slice(&self.0[5..14]);
        Ok(RotationMatrix::new(m)?)
    }

    /// The full state this vector stands for.
    pub fn to_state(&self) -> Result<State, SymmetryError> {
        Ok(State {
            x: self.position(),
            v: self.velocity(),
            r: self.rotation()?,
            omega: self.omega(),
        })
    }

    pub fn max_abs_diff(&self, other: &ReducedState) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Packs a state that already lies on the representative ray, dropping `x₂`.
pub fn pack_reduced(s: &State) -> ReducedState {
    let mut out = [0.0; REDUCED_DIM];
    out[0] = s.x.x;
    out[1] = s.x.z;
    out[2..5].copy_from_slice(s.v.as_slice());
    out[5..14].copy_from_slice(&s.r.to_row_major());
    out[14..17].copy_from_slice(s.omega.as_slice());
    ReducedState(out)
}

/// Maps `s` to its orbit representative `g_[θ] s`.
///
/// Returns the group element used so results computed in the reduced frame
/// can be rotated back with its inverse.
pub fn reduce_state(s: &State) -> Result<(ReducedState, GroupElement), SymmetryError> {
    let g = representative_angle(s);
    let rep = act_on_state(s, &g);
    if rep.x.y.abs() > REPRESENTATIVE_TOLERANCE {
        return Err(SymmetryError::NonZeroLateral(rep.x.y));
    }
    Ok((pack_reduced(&rep), g))
}
