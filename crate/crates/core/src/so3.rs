//! Rotation-group primitives: hat/vee maps, rotations about the vertical
//! axis, and projection of drifted matrices back onto SO(3).
//!
//! `Mat3` entries are addressed `(row, column)`; whenever a matrix is
//! flattened (reduced states, CSV traces, encodings) the order is row-major:
//! `r11, r12, r13, r21, ..., r33`.

use std::f64::consts::{PI, TAU};
use std::ops::Mul;

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Largest `‖S + Sᵀ‖_F` accepted by [`vee`].
pub const SKEW_TOLERANCE: f64 = 1e-9;
/// Largest `‖RᵀR − I‖_F` (and `|det R − 1|`) for a valid [`RotationMatrix`].
pub const ROTATION_TOLERANCE: f64 = 1e-9;
/// Largest `‖RᵀR − I‖_F` that [`reorthonormalize`] agrees to repair.
pub const PROJECTION_DOMAIN: f64 = 1e-3;

const PROJECTION_TARGET: f64 = 1e-15;
const PROJECTION_MAX_ITERS: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum So3Error {
    #[error("matrix is not skew-symmetric: ‖S + Sᵀ‖_F = {0:e}")]
    NotSkew(f64),
    #[error("matrix is too far from SO(3) to project: ‖RᵀR − I‖_F = {0:e}")]
    OutsideProjectionDomain(f64),
    #[error("matrix is not a rotation: ‖RᵀR − I‖_F = {orthogonality:e}, det = {det}")]
    NotRotation { orthogonality: f64, det: f64 },
    #[error("matrix has non-finite entries")]
    NonFinite,
}

/// Attitude matrix known to lie on SO(3) within [`ROTATION_TOLERANCE`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(Mat3);

impl RotationMatrix {
    pub fn identity() -> Self {
        Self(Mat3::identity())
    }

    /// Validates `m` against the SO(3) invariants.
    pub fn new(m: Mat3) -> Result<Self, So3Error> {
        if !m.iter().all(|x| x.is_finite()) {
            return Err(So3Error::NonFinite);
        }
        let orthogonality = orthogonality_error(&m);
        let det = m.determinant();
        if orthogonality > ROTATION_TOLERANCE || (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(So3Error::NotRotation { orthogonality, det });
        }
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn into_inner(self) -> Mat3 {
        self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    /// Row-major flattening.
    pub fn to_row_major(&self) -> [f64; 9] {
        let m = &self.0;
        [
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
        ]
    }
}

impl Mul for RotationMatrix {
    type Output = RotationMatrix;
    fn mul(self, rhs: RotationMatrix) -> RotationMatrix {
        RotationMatrix(self.0 * rhs.0)
    }
}

impl Mul<Vec3> for RotationMatrix {
    type Output = Vec3;
    fn mul(self, rhs: Vec3) -> Vec3 {
        self.0 * rhs
    }
}

/// `‖RᵀR − I‖_F`.
pub fn orthogonality_error(m: &Mat3) -> f64 {
    (m.transpose() * m - Mat3::identity()).norm()
}

/// Skew-symmetric matrix with `hat(v) * w == v × w`.
pub fn hat(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`hat`]. Off-diagonal pairs are averaged, so `vee(hat(v))`
/// reproduces `v` exactly.
pub fn vee(s: &Mat3) -> Result<Vec3, So3Error> {
    if !s.iter().all(|x| x.is_finite()) {
        return Err(So3Error::NonFinite);
    }
    let asym = (s + s.transpose()).norm();
    if asym > SKEW_TOLERANCE {
        return Err(So3Error::NotSkew(asym));
    }
    Ok(Vec3::new(
        0.5 * (s[(2, 1)] - s[(1, 2)]),
        0.5 * (s[(0, 2)] - s[(2, 0)]),
        0.5 * (s[(1, 0)] - s[(0, 1)]),
    ))
}

/// Wraps an angle into `(−π, π]`. Angles already in range are returned
/// untouched.
pub fn wrap_angle(theta: f64) -> f64 {
    if theta > -PI && theta <= PI {
        return theta;
    }
    let w = (theta + PI).rem_euclid(TAU) - PI;
    if w <= -PI {
        w + TAU
    } else {
        w
    }
}

/// `exp(θ ê₃)`: rotation by `theta` about the third inertial axis.
pub fn rot_z(theta: f64) -> RotationMatrix {
    let (s, c) = wrap_angle(theta).sin_cos();
    RotationMatrix(Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0))
}

pub(crate) fn rot_x(phi: f64) -> RotationMatrix {
    let (s, c) = phi.sin_cos();
    RotationMatrix(Mat3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c))
}

pub(crate) fn rot_y(phi: f64) -> RotationMatrix {
    let (s, c) = phi.sin_cos();
    RotationMatrix(Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c))
}

/// Rotation from z-y-z Euler angles; used to draw arbitrary attitudes.
pub fn rot_zyz(alpha: f64, beta: f64, gamma: f64) -> RotationMatrix {
    rot_z(alpha) * rot_y(beta) * rot_z(gamma)
}

/// Projects a nearly-orthogonal matrix onto its polar factor, the nearest
/// rotation in Frobenius norm.
///
/// Uses the Newton–Schulz iteration `R ← ½ R (3I − RᵀR)`, which converges
/// quadratically to the orthogonal polar factor inside the projection domain
/// and commutes with left multiplication by any rotation.
pub fn reorthonormalize(m: &Mat3) -> Result<RotationMatrix, So3Error> {
    if !m.iter().all(|x| x.is_finite()) {
        return Err(So3Error::NonFinite);
    }
    let err = orthogonality_error(m);
    if err > PROJECTION_DOMAIN {
        return Err(So3Error::OutsideProjectionDomain(err));
    }
    if m.determinant() <= 0.0 {
        return Err(So3Error::NotRotation {
            orthogonality: err,
            det: m.determinant(),
        });
    }
    let three = Mat3::identity() * 3.0;
    let mut r = *m;
    let mut err = err;
    let mut iters = 0;
    while err > PROJECTION_TARGET && iters < PROJECTION_MAX_ITERS {
        r = 0.5 * r * (three - r.transpose() * r);
        err = orthogonality_error(&r);
        iters += 1;
    }
    RotationMatrix::new(r)
}
