//! Randomized invariants over the public API.

use std::f64::consts::PI;

use proptest::prelude::*;
use quadrl::bench::verify::{grad_check_net, random_state};
use quadrl::dynamics::{inverse_mixer, mixer, rk4_step};
use quadrl::env::{reward, thrusts_to_actor, actor_to_thrusts};
use quadrl::nn::{Activation, Mlp};
use quadrl::rl::encode;
use quadrl::so3::orthogonality_error;
use quadrl::symmetry::{act_on_state, reduce_state, GroupElement};
use quadrl::{Action, AgentMode, EnvConfig, QuadrotorParams, State};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn state(seed: u64) -> State {
    random_state(&mut ChaCha8Rng::seed_from_u64(seed))
}

fn thrusts() -> impl Strategy<Value = Action> {
    let t_max = QuadrotorParams::default().max_thrust;
    prop::array::uniform4(0.0..t_max).prop_map(Action::new)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn group_action_composes(seed in any::<u64>(), a in -PI..PI, b in -PI..PI) {
        let s = state(seed);
        let (ga, gb) = (GroupElement::new(a), GroupElement::new(b));
        let lhs = act_on_state(&act_on_state(&s, &gb), &ga);
        let rhs = act_on_state(&s, &ga.compose(&gb));
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-12);
        let back = act_on_state(&act_on_state(&s, &ga), &ga.inverse());
        prop_assert!(back.max_abs_diff(&s) < 1e-12);
    }

    #[test]
    fn reduction_is_orbit_invariant(seed in any::<u64>(), theta in -PI..PI, zero_xy in any::<bool>()) {
        let mut s = state(seed);
        if zero_xy {
            s.x.x = 0.0;
            s.x.y = 0.0;
        }
        let (a, _) = reduce_state(&s).unwrap();
        let (b, _) = reduce_state(&act_on_state(&s, &GroupElement::new(theta))).unwrap();
        prop_assert!(a.max_abs_diff(&b) < 1e-10);
        // the first coordinate is the horizontal distance
        prop_assert!((a.0[0] - s.x.x.hypot(s.x.y)).abs() < 1e-12);
    }

    #[test]
    fn reduced_state_reconstructs_orbit_member(seed in any::<u64>()) {
        let s = state(seed);
        let (r, g) = reduce_state(&s).unwrap();
        let back = act_on_state(&r.to_state().unwrap(), &g.inverse());
        prop_assert!(back.max_abs_diff(&s) < 1e-12);
    }

    #[test]
    fn equivariant_encoding_is_invariant(seed in any::<u64>(), theta in -PI..PI) {
        let cfg = EnvConfig::default();
        let s = state(seed);
        let a = encode(&s, AgentMode::Equivariant, &cfg).unwrap();
        let b = encode(&act_on_state(&s, &GroupElement::new(theta)), AgentMode::Equivariant, &cfg).unwrap();
        prop_assert_eq!(a.len(), 17);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn reward_stays_in_range(seed in any::<u64>(), a in thrusts(), a_prev in thrusts(), scale in 0.5f64..20.0) {
        let cfg = EnvConfig::default();
        let p = QuadrotorParams::default();
        let mut s = state(seed);
        s.x *= scale;
        s.v *= scale;
        s.omega *= scale;
        let r = reward(&s, &a, &a_prev, &cfg, &p);
        prop_assert!((0.0..=cfg.reward_scale).contains(&r), "{}", r);
    }

    #[test]
    fn mixer_round_trip(a in thrusts()) {
        let p = QuadrotorParams::default();
        let back = inverse_mixer(&mixer(&a, &p), &p);
        for (x, y) in a.thrusts.iter().zip(back.thrusts) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn actor_scaling_round_trip(a in thrusts()) {
        let p = QuadrotorParams::default();
        let u = thrusts_to_actor(&a, &p);
        let back = actor_to_thrusts(&u, &p);
        for (x, y) in a.thrusts.iter().zip(back.thrusts) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn integration_stays_on_so3(seed in any::<u64>(), k in prop::array::uniform4(0.8f64..1.2), steps in 1usize..200) {
        let p = QuadrotorParams::default();
        let a = Action::new(k.map(|k| k * p.hover_thrust()));
        let mut s = state(seed);
        for _ in 0..steps {
            s = rk4_step(&s, &a, 0.01, &p).unwrap();
        }
        prop_assert!(orthogonality_error(s.r.matrix()) < 1e-12);
        prop_assert!((s.r.matrix().determinant() - 1.0).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn backprop_matches_finite_differences(
        seed in any::<u64>(),
        sizes in prop::collection::vec(1usize..12, 2..5),
        last in prop::sample::select(vec![Activation::Identity, Activation::Tanh]),
        hidden_tanh in any::<bool>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hidden = if hidden_tanh { Activation::Tanh } else { Activation::Relu };
        let mut acts = vec![hidden; sizes.len() - 2];
        acts.push(last);
        let mut net = Mlp::new(&sizes, &acts).unwrap();
        net.init_uniform(&mut rng, None);
        let r = grad_check_net(&net, 3, 3, &mut rng);
        prop_assert!(r.max_rel_error < 1e-5, "{:?}", r);
    }
}
