//! Property battery run by `quadrl verify`.
//!
//! Each property draws its own cases from a seeded stream and reports the
//! worst observed error against a fixed bound. The dynamics right-hand side
//! and the representative-angle rule are injectable so fault fixtures can
//! show which property catches which defect.

use std::f64::consts::PI;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{
    inverse_mixer, mixer, rigid_body_rhs, rk4_step_with, Action, QuadrotorParams, RigidBodyRhs, State, Wrench,
};
use crate::env::{reward, EnvConfig};
use crate::nn::{Activation, Matrix, Mlp};
use crate::rl::{encode, AgentMode, ACTION_DIM};
use crate::so3::{rot_x, rot_zyz, Vec3};
use crate::symmetry::{act_on_state, pack_reduced, representative_angle, GroupElement, ReducedState};

/// The pieces of the model that the battery exercises.
#[derive(Clone, Copy)]
pub struct Model {
    pub rhs: RigidBodyRhs,
    pub representative: fn(&State) -> GroupElement,
}

impl Default for Model {
    fn default() -> Self {
        Self {
            rhs: rigid_body_rhs,
            representative: representative_angle,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bound {
    AtMost(f64),
    Within(f64, f64),
}

impl Bound {
    pub fn holds(&self, x: f64) -> bool {
        match *self {
            Bound::AtMost(t) => x <= t,
            Bound::Within(lo, hi) => (lo..=hi).contains(&x),
        }
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bound::AtMost(t) => write!(f, "<= {t:e}"),
            Bound::Within(lo, hi) => write!(f, "in [{lo}, {hi}]"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyReport {
    pub name: String,
    /// Worst error, or for order checks the convergence ratio furthest
    /// from the band.
    pub worst_error: f64,
    pub tolerance: Bound,
    pub passed: bool,
    pub detail: String,
}

impl PropertyReport {
    fn new(name: &str, worst_error: f64, tolerance: Bound, detail: String) -> Self {
        Self {
            name: name.to_string(),
            worst_error,
            tolerance,
            // NaN never passes
            passed: tolerance.holds(worst_error),
            detail,
        }
    }
}

impl fmt::Display for PropertyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {}: worst {:.3e} (bound {}) {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.worst_error,
            self.tolerance,
            self.detail
        )
    }
}

pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> crate::so3::RotationMatrix {
    let alpha = rng.random_range(-PI..PI);
    let beta = rng.random_range(-1.0f64..1.0).acos();
    let gamma = rng.random_range(-PI..PI);
    rot_zyz(alpha, beta, gamma)
}

/// A state with position in `[−3, 3]³`, speed components up to 2 m/s,
/// arbitrary attitude and body rates up to 5 rad/s.
pub fn random_state<R: Rng + ?Sized>(rng: &mut R) -> State {
    let mut v3 = |k: f64| Vec3::new(rng.random_range(-k..k), rng.random_range(-k..k), rng.random_range(-k..k));
    let x = v3(3.0);
    let v = v3(2.0);
    let omega = v3(5.0);
    State {
        x,
        v,
        r: random_rotation(rng),
        omega,
    }
}

pub fn random_action<R: Rng + ?Sized>(rng: &mut R, p: &QuadrotorParams) -> Action {
    Action::new(std::array::from_fn(|_| rng.random_range(0.0..p.max_thrust)))
}

pub fn random_angle<R: Rng + ?Sized>(rng: &mut R) -> GroupElement {
    GroupElement::new(rng.random_range(-PI..PI))
}

/// One-step and 100-step commutation `F(g s) = g F(s)`.
pub fn dynamics_equivariance(model: &Model, p: &QuadrotorParams, cases: usize, rng: &mut ChaCha8Rng) -> [PropertyReport; 2] {
    let dt = 0.01;
    let step = |s: &State, a: &Action| rk4_step_with(model.rhs, s, a, dt, p);
    let mut one = 0.0f64;
    let mut many = 0.0f64;
    let mut failures = 0usize;
    for _ in 0..cases {
        let s = random_state(rng);
        let g = random_angle(rng);
        let a = random_action(rng, p);
        match (step(&act_on_state(&s, &g), &a), step(&s, &a)) {
            (Ok(lhs), Ok(rhs)) => one = one.max(lhs.max_abs_diff(&act_on_state(&rhs, &g))),
            _ => failures += 1,
        }
    }
    let rollouts = (cases / 10).max(1);
    for _ in 0..rollouts {
        let mut s = random_state(rng);
        s.omega /= 2.0;
        let g = random_angle(rng);
        let mut rotated = act_on_state(&s, &g);
        for _ in 0..100 {
            let a = random_action(rng, p);
            match (step(&s, &a), step(&rotated, &a)) {
                (Ok(n), Ok(nr)) => {
                    s = n;
                    rotated = nr;
                }
                _ => {
                    failures += 1;
                    break;
                }
            }
        }
        many = many.max(rotated.max_abs_diff(&act_on_state(&s, &g)));
    }
    if failures > 0 {
        one = f64::NAN;
        many = f64::NAN;
    }
    [
        PropertyReport::new(
            "dynamics equivariance (1 step)",
            one,
            Bound::AtMost(1e-10),
            format!("{cases} cases, {failures} integrator faults"),
        ),
        PropertyReport::new(
            "dynamics equivariance (100 steps)",
            many,
            Bound::AtMost(1e-8),
            format!("{rollouts} rollouts"),
        ),
    ]
}

/// `r(g s, a, a_prev) = r(s, a, a_prev)`.
pub fn reward_invariance(cfg: &EnvConfig, p: &QuadrotorParams, cases: usize, rng: &mut ChaCha8Rng) -> PropertyReport {
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let s = random_state(rng);
        let g = random_angle(rng);
        let a = random_action(rng, p);
        let a_prev = random_action(rng, p);
        let d = reward(&act_on_state(&s, &g), &a, &a_prev, cfg, p) - reward(&s, &a, &a_prev, cfg, p);
        worst = worst.max(d.abs());
    }
    PropertyReport::new("reward invariance", worst, Bound::AtMost(1e-12), format!("{cases} cases"))
}

/// Representative of `s` under the model's angle rule, plus the lateral
/// residual that should vanish.
pub fn model_reduce(model: &Model, s: &State) -> (ReducedState, f64) {
    let rep = act_on_state(s, &(model.representative)(s));
    (pack_reduced(&rep), rep.x.y.abs())
}

/// `reduce(g s) = reduce(s)` and the rotated lateral coordinate vanishes.
/// Every fifth case has zero horizontal position, and every other one of
/// those zero horizontal velocity as well.
pub fn quotient(model: &Model, cases: usize, rng: &mut ChaCha8Rng) -> PropertyReport {
    let mut worst = 0.0f64;
    let mut degenerate = 0;
    for k in 0..cases {
        let mut s = random_state(rng);
        if k % 5 == 0 {
            s.x.x = 0.0;
            s.x.y = 0.0;
            degenerate += 1;
            if k % 10 == 0 {
                s.v.x = 0.0;
                s.v.y = 0.0;
            }
        }
        let g = random_angle(rng);
        let (a, lat_a) = model_reduce(model, &s);
        let (b, lat_b) = model_reduce(model, &act_on_state(&s, &g));
        worst = worst.max(a.max_abs_diff(&b)).max(lat_a).max(lat_b);
    }
    PropertyReport::new(
        "quotient well-definedness",
        worst,
        Bound::AtMost(1e-10),
        format!("{cases} cases, {degenerate} with zero horizontal position"),
    )
}

/// Equivariant-mode actor and critic outputs are unchanged by the group
/// action on the state.
pub fn network_invariance(cfg: &EnvConfig, cases: usize, hidden: usize, rng: &mut ChaCha8Rng) -> PropertyReport {
    let dim = AgentMode::Equivariant.obs_dim();
    let actor = Mlp::actor(dim, hidden, ACTION_DIM, rng);
    let critic = Mlp::critic(dim + ACTION_DIM, hidden, rng);
    let mut worst = 0.0f64;
    let mut faults = 0;
    for _ in 0..cases {
        let s = random_state(rng);
        let g = random_angle(rng);
        let a: Vec<f64> = (0..ACTION_DIM).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (Ok(o1), Ok(o2)) = (
            encode(&s, AgentMode::Equivariant, cfg),
            encode(&act_on_state(&s, &g), AgentMode::Equivariant, cfg),
        ) else {
            faults += 1;
            continue;
        };
        let q = |o: &[f64]| {
            let mut input = o.to_vec();
            input.extend_from_slice(&a);
            critic.predict_one(&input).expect("critic width")[0]
        };
        let p1 = actor.predict_one(&o1).expect("actor width");
        let p2 = actor.predict_one(&o2).expect("actor width");
        let dp = p1.iter().zip(&p2).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        worst = worst.max(dp).max((q(&o1) - q(&o2)).abs());
    }
    if faults > 0 {
        worst = f64::NAN;
    }
    PropertyReport::new(
        "network invariance",
        worst,
        Bound::AtMost(1e-10),
        format!("{cases} cases, hidden {hidden}, {faults} encode faults"),
    )
}

/// Outcome of comparing backprop against central differences.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Coordinates skipped because the probe crossed a ReLU kink.
    pub skipped: usize,
}

const FD_STEP: f64 = 1e-5;
// below this magnitude gradients are compared absolutely
const GRAD_FLOOR: f64 = 1e-6;

fn relu_pattern(net: &Mlp, input: &Matrix) -> Vec<bool> {
    let (_, cache) = net.forward(input).expect("probe width");
    net.layers()
        .iter()
        .zip(cache.pre_activations())
        .filter(|(l, _)| l.activation == Activation::Relu)
        .flat_map(|(_, z)| z.data().iter().map(|&v| v > 0.0).collect::<Vec<_>>())
        .collect()
}

/// Checks `∂L/∂θ` and `∂L/∂input` of `L = Σ w ∘ net(input)` on sampled
/// parameter coordinates of every layer and on every input coordinate.
pub fn grad_check_net(net: &Mlp, batch: usize, per_layer: usize, rng: &mut ChaCha8Rng) -> GradCheck {
    let input = Matrix::from_vec(
        batch,
        net.input_dim(),
        (0..batch * net.input_dim()).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .expect("shape");
    let weights = Matrix::from_vec(
        batch,
        net.output_dim(),
        (0..batch * net.output_dim()).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .expect("shape");
    let loss = |n: &Mlp, x: &Matrix| -> f64 {
        let out = n.predict(x).expect("width");
        out.data().iter().zip(weights.data()).map(|(a, b)| a * b).sum()
    };
    let (_, cache) = net.forward(&input).expect("width");
    let grads = net.backward(&cache, &weights).expect("fresh cache");
    let base = relu_pattern(net, &input);
    let mut out = GradCheck::default();
    let record = |analytic: f64, numeric: f64, out: &mut GradCheck| {
        let scale = analytic.abs().max(numeric.abs()).max(GRAD_FLOOR);
        out.max_rel_error = out.max_rel_error.max((analytic - numeric).abs() / scale);
        out.checked += 1;
    };

    let mut coords = Vec::new();
    for l in 0..net.layers().len() {
        for range in [net.weight_range(l), net.bias_range(l)] {
            for _ in 0..per_layer {
                coords.push(rng.random_range(range.clone()));
            }
        }
    }
    let mut probe = net.clone();
    for i in coords {
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + FD_STEP;
        let (lp, pp) = (loss(&probe, &input), relu_pattern(&probe, &input));
        probe.params_mut()[i] = orig - FD_STEP;
        let (lm, pm) = (loss(&probe, &input), relu_pattern(&probe, &input));
        probe.params_mut()[i] = orig;
        if pp != base || pm != base {
            out.skipped += 1;
            continue;
        }
        record(grads.params[i], (lp - lm) / (2.0 * FD_STEP), &mut out);
    }
    for i in 0..input.data().len() {
        let mut x = input.clone();
        x.data_mut()[i] += FD_STEP;
        let (lp, pp) = (loss(net, &x), relu_pattern(net, &x));
        x.data_mut()[i] -= 2.0 * FD_STEP;
        let (lm, pm) = (loss(net, &x), relu_pattern(net, &x));
        if pp != base || pm != base {
            out.skipped += 1;
            continue;
        }
        record(grads.input.data()[i], (lp - lm) / (2.0 * FD_STEP), &mut out);
    }
    out
}

/// Gradient checks over `draws` fresh networks, alternating baseline and
/// equivariant input widths, for the actor, the Gaussian actor and the
/// critic.
pub fn gradient_checks(draws: usize, hidden: usize, rng: &mut ChaCha8Rng) -> PropertyReport {
    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut skipped = 0;
    for k in 0..draws {
        let mode = AgentMode::ALL[k % 2];
        let dim = mode.obs_dim();
        let nets = [
            Mlp::actor(dim, hidden, ACTION_DIM, rng),
            Mlp::gaussian_actor(dim, hidden, ACTION_DIM, rng),
            Mlp::critic(dim + ACTION_DIM, hidden, rng),
        ];
        for net in &nets {
            let r = grad_check_net(net, 2, 4, rng);
            worst = worst.max(r.max_rel_error);
            checked += r.checked;
            skipped += r.skipped;
        }
    }
    PropertyReport::new(
        "gradient check",
        worst,
        Bound::AtMost(1e-5),
        format!("{draws} draws, {checked} coordinates, {skipped} skipped at ReLU kinks"),
    )
}

pub const ORDER_BAND: (f64, f64) = (12.0, 20.0);
/// Step sizes of the order study; each is half the previous.
pub const ORDER_STEPS: [f64; 4] = [0.04, 0.02, 0.01, 0.005];

fn integrate(model: &Model, p: &QuadrotorParams, s0: &State, dt: f64, schedule: &[(f64, Action)]) -> Option<State> {
    let mut s = *s0;
    for (duration, a) in schedule {
        let n = (duration / dt).round() as usize;
        for _ in 0..n {
            s = rk4_step_with(model.rhs, &s, a, dt, p).ok()?;
        }
    }
    Some(s)
}

/// Error ratios between consecutive step sizes.
fn ratios(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| w[0] / w[1]).collect()
}

fn sci(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:.2e}")).collect::<Vec<_>>().join(", ")
}

/// Ratio furthest (in log scale) from the centre of the band.
fn worst_ratio(rs: &[f64]) -> f64 {
    let centre = (ORDER_BAND.0 * ORDER_BAND.1).sqrt();
    rs.iter()
        .copied()
        .max_by(|a, b| {
            let da = if a.is_nan() { f64::INFINITY } else { (a / centre).ln().abs() };
            let db = if b.is_nan() { f64::INFINITY } else { (b / centre).ln().abs() };
            da.total_cmp(&db)
        })
        .unwrap_or(f64::NAN)
}

/// A one-second maneuver of five 0.2 s segments with thrusts drawn around
/// hover, starting from a tilted, spinning state.
pub fn forced_maneuver<R: Rng + ?Sized>(p: &QuadrotorParams, rng: &mut R) -> (State, Vec<(f64, Action)>) {
    let hover = p.hover_thrust();
    let schedule = (0..5)
        .map(|_| (0.2, Action::new(std::array::from_fn(|_| hover * rng.random_range(0.6..1.4)))))
        .collect();
    let mut s0 = random_state(rng);
    s0.r = rot_zyz(rng.random_range(-PI..PI), rng.random_range(0.1..0.5), rng.random_range(-PI..PI));
    s0.omega = Vec3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
    (s0, schedule)
}

/// Error at each of [`ORDER_STEPS`] against a run at the smallest step / 64.
pub fn self_convergence_errors(model: &Model, p: &QuadrotorParams, s0: &State, schedule: &[(f64, Action)]) -> Vec<f64> {
    let reference = integrate(model, p, s0, ORDER_STEPS[3] / 64.0, schedule);
    ORDER_STEPS
        .iter()
        .map(|&dt| match (&reference, integrate(model, p, s0, dt, schedule)) {
            (Some(r), Some(s)) => s.max_abs_diff(r),
            _ => f64::NAN,
        })
        .collect()
}

/// Closed-form solution for a torque-free spin about the body first axis
/// under equal rotor thrusts: `R(t) = R₀ exp(ωt ê₁)` and the translational
/// motion follows by integrating the rotating thrust direction.
pub fn spin_solution(p: &QuadrotorParams, s0: &State, omega: f64, thrust: f64, t: f64) -> State {
    let acc = 4.0 * thrust / p.mass;
    let (sn, cs) = (omega * t).sin_cos();
    let u = Vec3::new(0.0, (cs - 1.0) / omega, sn / omega);
    let w = Vec3::new(0.0, (sn / omega - t) / omega, (1.0 - cs) / (omega * omega));
    let r0 = s0.r.matrix();
    let e3 = Vec3::z();
    State {
        x: s0.x + s0.v * t + e3 * (0.5 * p.gravity * t * t) - r0 * w * acc,
        v: s0.v + e3 * (p.gravity * t) - r0 * u * acc,
        r: s0.r * rot_x(omega * t),
        omega: Vec3::new(omega, 0.0, 0.0),
    }
}

pub fn spin_errors(model: &Model, p: &QuadrotorParams, s0: &State, omega: f64, thrust: f64) -> Vec<f64> {
    let mut start = *s0;
    start.omega = Vec3::new(omega, 0.0, 0.0);
    let exact = spin_solution(p, &start, omega, thrust, 1.0);
    let schedule = [(1.0, Action::new([thrust; 4]))];
    ORDER_STEPS
        .iter()
        .map(|&dt| integrate(model, p, &start, dt, &schedule).map_or(f64::NAN, |s| s.max_abs_diff(&exact)))
        .collect()
}

/// Fourth-order convergence: error ratios per halving must lie in the band
/// both for the forced maneuver (self-convergence) and against the exact
/// spin solution.
pub fn rk4_order(model: &Model, p: &QuadrotorParams, rng: &mut ChaCha8Rng) -> [PropertyReport; 2] {
    let (s0, schedule) = forced_maneuver(p, rng);
    let errs = self_convergence_errors(model, p, &s0, &schedule);
    let rs = ratios(&errs);
    let maneuver = PropertyReport::new(
        "RK4 order (forced maneuver)",
        worst_ratio(&rs),
        Bound::Within(ORDER_BAND.0, ORDER_BAND.1),
        format!("errors [{}], ratios {rs:.2?}", sci(&errs)),
    );
    let spin_start = random_state(rng);
    let omega = rng.random_range(6.0..10.0);
    let thrust = p.hover_thrust() * rng.random_range(0.8..1.2);
    let errs = spin_errors(model, p, &spin_start, omega, thrust);
    let rs = ratios(&errs);
    let exact = PropertyReport::new(
        "RK4 order (exact spin)",
        worst_ratio(&rs),
        Bound::Within(ORDER_BAND.0, ORDER_BAND.1),
        format!("omega {omega:.2} rad/s, errors [{}], ratios {rs:.2?}", sci(&errs)),
    );
    [maneuver, exact]
}

/// `mixer ∘ inverse_mixer` and `inverse_mixer ∘ mixer` are identities.
pub fn mixer_round_trip(p: &QuadrotorParams, cases: usize, rng: &mut ChaCha8Rng) -> PropertyReport {
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let a = random_action(rng, p);
        let back = inverse_mixer(&mixer(&a, p), p);
        for (x, y) in a.thrusts.iter().zip(back.thrusts) {
            worst = worst.max((x - y).abs());
        }
        let w = Wrench {
            thrust: rng.random_range(0.0..4.0 * p.max_thrust),
            moment: Vec3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-0.2..0.2)),
        };
        let w2 = mixer(&inverse_mixer(&w, p), p);
        worst = worst.max((w.thrust - w2.thrust).abs()).max((w.moment - w2.moment).amax());
    }
    PropertyReport::new("mixer round trip", worst, Bound::AtMost(1e-12), format!("{cases} cases"))
}

/// Case counts of the battery.
#[derive(Debug, Clone, Copy)]
pub struct BatterySize {
    pub cases: usize,
    pub network_cases: usize,
    pub hidden_units: usize,
    pub grad_draws: usize,
}

impl Default for BatterySize {
    fn default() -> Self {
        Self {
            cases: 1000,
            network_cases: 500,
            hidden_units: 256,
            grad_draws: 100,
        }
    }
}

/// Runs every property with streams derived from `seed`.
pub fn run_battery(model: &Model, seed: u64, size: BatterySize) -> Vec<PropertyReport> {
    let p = QuadrotorParams::default();
    let cfg = EnvConfig::default();
    let rng = |stream: u64| {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        r.set_stream(stream);
        r
    };
    let mut out = Vec::new();
    out.extend(dynamics_equivariance(model, &p, size.cases, &mut rng(0)));
    out.push(reward_invariance(&cfg, &p, size.cases, &mut rng(1)));
    out.push(quotient(model, size.cases, &mut rng(2)));
    out.push(network_invariance(&cfg, size.network_cases, size.hidden_units, &mut rng(3)));
    out.push(gradient_checks(size.grad_draws, size.hidden_units, &mut rng(4)));
    out.extend(rk4_order(model, &p, &mut rng(5)));
    out.push(mixer_round_trip(&p, size.cases, &mut rng(6)));
    out
}
