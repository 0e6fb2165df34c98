//! Deliberately broken models, to see which property catches which fault.

use quadrl::bench::verify::{dynamics_equivariance, quotient, rk4_order, Model};
use quadrl::dynamics::{rigid_body_rhs, QuadrotorParams, StateDeriv, StateVector, Wrench};
use quadrl::symmetry::{representative_angle, GroupElement};
use quadrl::State;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn flipped_attitude_rhs(s: &StateVector, w: &Wrench, p: &QuadrotorParams) -> StateDeriv {
    let mut d = rigid_body_rhs(s, w, p);
    d.r_dot = -d.r_dot;
    d
}

fn flipped_representative(s: &State) -> GroupElement {
    representative_angle(s).inverse()
}

#[test]
fn attitude_sign_error_passes_equivariance_but_fails_order() {
    let model = Model {
        rhs: flipped_attitude_rhs,
        ..Model::default()
    };
    let p = QuadrotorParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for r in dynamics_equivariance(&model, &p, 200, &mut rng) {
        assert!(r.passed, "{r}");
    }
    let [maneuver, exact] = rk4_order(&model, &p, &mut rng);
    // a sign flip is still a smooth vector field, so self-convergence holds
    assert!(maneuver.passed, "{maneuver}");
    assert!(!exact.passed, "{exact}");
    assert!(exact.worst_error < 2.0, "{exact}");
}

#[test]
fn wrong_angle_sign_breaks_quotient_by_order_one() {
    let model = Model {
        representative: flipped_representative,
        ..Model::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let r = quotient(&model, 200, &mut rng);
    assert!(!r.passed);
    assert!(r.worst_error > 0.1, "{r}");
}

#[test]
fn default_model_is_clean() {
    let p = QuadrotorParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let model = Model::default();
    assert!(quotient(&model, 200, &mut rng).passed);
    assert!(rk4_order(&model, &p, &mut rng).iter().all(|r| r.passed));
}
