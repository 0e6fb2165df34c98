//! Twin-delayed deep deterministic policy gradient.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Batch, RlError, ACTION_DIM};
use crate::nn::{AdamState, Matrix, Mlp};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Td3Config {
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub warmup_steps: usize,
    pub buffer_capacity: usize,
    /// Std of the Gaussian exploration noise on the `[−1, 1]` action scale.
    pub expl_noise: f64,
    pub target_noise: f64,
    pub target_noise_clip: f64,
    pub policy_delay: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
}

impl Default for Td3Config {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 0.005,
            batch_size: 256,
            warmup_steps: 1000,
            buffer_capacity: 1_000_000,
            expl_noise: 0.1,
            target_noise: 0.2,
            target_noise_clip: 0.5,
            policy_delay: 2,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
        }
    }
}

impl Td3Config {
    pub fn validate(&self) -> Result<(), RlError> {
        let bad = |name, reason: &str| {
            Err(RlError::InvalidConfig {
                name,
                reason: reason.into(),
            })
        };
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma", "must lie in (0, 1)");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau", "must lie in (0, 1]");
        }
        if self.policy_delay < 1 {
            return bad("policy_delay", "must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be positive");
        }
        if self.buffer_capacity < self.batch_size {
            return bad("buffer_capacity", "must be at least the batch size");
        }
        for (name, v) in [
            ("expl_noise", self.expl_noise),
            ("target_noise", self.target_noise),
            ("target_noise_clip", self.target_noise_clip),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(name, "must be non-negative");
            }
        }
        for (name, v) in [("actor_lr", self.actor_lr), ("critic_lr", self.critic_lr)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(name, "must be positive");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Td3Diagnostics {
    /// Mean of the two critics' squared TD errors.
    pub critic_loss: f64,
    /// Present on updates that also moved the actor.
    pub actor_loss: Option<f64>,
    pub mean_target: f64,
}

/// One Adam step of `critic` towards targets `y`; returns the mean squared error.
pub(super) fn critic_step(critic: &mut Mlp, opt: &mut AdamState, input: &Matrix, y: &[f64]) -> Result<f64, RlError> {
    let (q, cache) = critic.forward(input)?;
    let n = y.len() as f64;
    let mut grad = Matrix::zeros(y.len(), 1);
    let mut loss = 0.0;
    for (i, (&qi, &yi)) in q.data().iter().zip(y).enumerate() {
        let e = qi - yi;
        loss += e * e;
        grad.data_mut()[i] = 2.0 * e / n;
    }
    loss /= n;
    if !loss.is_finite() {
        return Err(RlError::NonFiniteLoss("critic"));
    }
    let g = critic.backward(&cache, &grad)?;
    critic.apply_adam(&g.params, opt)?;
    Ok(loss)
}

pub(super) fn to_action(v: &[f64]) -> [f64; ACTION_DIM] {
    v.try_into().expect("actor emits four actions")
}

#[derive(Debug, Clone)]
pub struct Td3Agent {
    cfg: Td3Config,
    pub actor: Mlp,
    pub actor_target: Mlp,
    pub critic1: Mlp,
    pub critic2: Mlp,
    pub critic1_target: Mlp,
    pub critic2_target: Mlp,
    actor_opt: AdamState,
    critic1_opt: AdamState,
    critic2_opt: AdamState,
    updates: u64,
}

impl Td3Agent {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, hidden: usize, cfg: Td3Config, rng: &mut R) -> Result<Self, RlError> {
        cfg.validate()?;
        let actor = Mlp::actor(obs_dim, hidden, ACTION_DIM, rng);
        let critic1 = Mlp::critic(obs_dim + ACTION_DIM, hidden, rng);
        let critic2 = Mlp::critic(obs_dim + ACTION_DIM, hidden, rng);
        Ok(Self {
            cfg,
            actor_opt: AdamState::new(actor.num_params(), cfg.actor_lr),
            critic1_opt: AdamState::new(critic1.num_params(), cfg.critic_lr),
            critic2_opt: AdamState::new(critic2.num_params(), cfg.critic_lr),
            actor_target: actor.clone(),
            critic1_target: critic1.clone(),
            critic2_target: critic2.clone(),
            actor,
            critic1,
            critic2,
            updates: 0,
        })
    }

    pub fn config(&self) -> &Td3Config {
        &self.cfg
    }

    pub fn obs_dim(&self) -> usize {
        self.actor.input_dim()
    }

    /// Number of completed [`Td3Agent::update`] calls.
    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn act(&self, obs: &[f64]) -> Result<[f64; ACTION_DIM], RlError> {
        Ok(to_action(&self.actor.predict_one(obs)?))
    }

    /// Deterministic action plus clipped Gaussian exploration noise.
    pub fn act_explore<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<[f64; ACTION_DIM], RlError> {
        let a = self.act(obs)?;
        Ok(a.map(|ai| {
            let n: f64 = rng.sample(StandardNormal);
            (ai + self.cfg.expl_noise * n).clamp(-1.0, 1.0)
        }))
    }

    /// Clipped double-Q targets with target-policy smoothing.
    pub fn targets<R: Rng + ?Sized>(&self, batch: &Batch, rng: &mut R) -> Result<Vec<f64>, RlError> {
        let mut next_a = self.actor_target.predict(&batch.next_obs)?;
        let c = self.cfg.target_noise_clip;
        for a in next_a.data_mut() {
            let n: f64 = rng.sample(StandardNormal);
            *a = (*a + (self.cfg.target_noise * n).clamp(-c, c)).clamp(-1.0, 1.0);
        }
        let input = batch.next_obs.hcat(&next_a)?;
        let q1 = self.critic1_target.predict(&input)?;
        let q2 = self.critic2_target.predict(&input)?;
        Ok((0..batch.len())
            .map(|i| {
                let q = q1.data()[i].min(q2.data()[i]);
                batch.rewards[i] + self.cfg.gamma * (1.0 - batch.done[i]) * q
            })
            .collect())
    }

    pub fn update<R: Rng + ?Sized>(&mut self, batch: &Batch, rng: &mut R) -> Result<Td3Diagnostics, RlError> {
        let y = self.targets(batch, rng)?;
        let input = batch.obs.hcat(&batch.actions)?;
        let l1 = critic_step(&mut self.critic1, &mut self.critic1_opt, &input, &y)?;
        let l2 = critic_step(&mut self.critic2, &mut self.critic2_opt, &input, &y)?;
        self.updates += 1;

        let mut actor_loss = None;
        if self.updates.is_multiple_of(self.cfg.policy_delay as u64) {
            actor_loss = Some(self.actor_step(&batch.obs)?);
            let tau = self.cfg.tau;
            self.actor_target.soft_update_from(&self.actor, tau)?;
            self.critic1_target.soft_update_from(&self.critic1, tau)?;
            self.critic2_target.soft_update_from(&self.critic2, tau)?;
        }
        Ok(Td3Diagnostics {
            critic_loss: 0.5 * (l1 + l2),
            actor_loss,
            mean_target: y.iter().sum::<f64>() / y.len() as f64,
        })
    }

    /// Deterministic policy gradient through the first critic.
    fn actor_step(&mut self, obs: &Matrix) -> Result<f64, RlError> {
        let n = obs.rows();
        let (a, actor_cache) = self.actor.forward(obs)?;
        let (q, critic_cache) = self.critic1.forward(&obs.hcat(&a)?)?;
        let loss = -q.data().iter().sum::<f64>() / n as f64;
        if !loss.is_finite() {
            return Err(RlError::NonFiniteLoss("actor"));
        }
        let grad_q = Matrix::from_vec(n, 1, vec![-1.0 / n as f64; n])?;
        let d_input = self.critic1.backward_input(&critic_cache, &grad_q)?;
        let d_action = d_input.columns(obs.cols(), obs.cols() + ACTION_DIM);
        let g = self.actor.backward(&actor_cache, &d_action)?;
        self.actor.apply_adam(&g.params, &mut self.actor_opt)?;
        Ok(loss)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rl::Transition;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_cfg() -> Td3Config {
        Td3Config {
            batch_size: 32,
            critic_lr: 1e-3,
            ..Td3Config::default()
        }
    }

    fn terminal_transition() -> Transition {
        Transition {
            obs: vec![0.1, -0.2, 0.3],
            action: [0.5, -0.5, 0.25, 0.0],
            reward: 0.07,
            next_obs: vec![0.0, 0.4, -0.1],
            done: true,
            prev_thrusts: [0.0; 4],
        }
    }

    #[test]
    fn terminal_target_is_reward_and_critics_converge() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut agent = Td3Agent::new(3, 32, small_cfg(), &mut rng).unwrap();
        let batch = Batch::repeat(&terminal_transition(), 32);
        let y = agent.targets(&batch, &mut rng).unwrap();
        assert!(y.iter().all(|&v| v == 0.07));
        let mut last = f64::INFINITY;
        for _ in 0..2000 {
            last = agent.update(&batch, &mut rng).unwrap().critic_loss;
        }
        assert!(last < 1e-8, "{last}");
    }

    #[test]
    fn actor_moves_only_on_delayed_updates() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut agent = Td3Agent::new(3, 16, small_cfg(), &mut rng).unwrap();
        let batch = Batch::repeat(&terminal_transition(), 32);
        for k in 1..=6u64 {
            let before = agent.actor.params().to_vec();
            let d = agent.update(&batch, &mut rng).unwrap();
            let moved = agent.actor.params() != before.as_slice();
            assert_eq!(moved, k % 2 == 0, "update {k}");
            assert_eq!(d.actor_loss.is_some(), k % 2 == 0);
        }
    }

    #[test]
    fn actor_step_raises_critic_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut agent = Td3Agent::new(3, 16, small_cfg(), &mut rng).unwrap();
        let obs = Matrix::from_vec(4, 3, (0..12).map(|k| (k as f64 * 0.37).sin()).collect()).unwrap();
        let value = |agent: &Td3Agent| {
            let a = agent.actor.predict(&obs).unwrap();
            let q = agent.critic1.predict(&obs.hcat(&a).unwrap()).unwrap();
            q.data().iter().sum::<f64>()
        };
        let before = value(&agent);
        for _ in 0..20 {
            agent.actor_step(&obs).unwrap();
        }
        assert!(value(&agent) > before);
    }

    #[test]
    fn soft_update_matches_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut agent = Td3Agent::new(3, 16, small_cfg(), &mut rng).unwrap();
        let batch = Batch::repeat(&terminal_transition(), 32);
        agent.update(&batch, &mut rng).unwrap();
        let target_before = agent.critic1_target.params().to_vec();
        agent.update(&batch, &mut rng).unwrap();
        let tau = agent.config().tau;
        for ((t, o), b) in agent.critic1_target.params().iter().zip(agent.critic1.params()).zip(&target_before) {
            assert!((t - (tau * o + (1.0 - tau) * b)).abs() <= 1e-15);
        }
    }

    #[test]
    fn exploration_stays_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = Td3Config {
            expl_noise: 5.0,
            ..small_cfg()
        };
        let agent = Td3Agent::new(3, 8, cfg, &mut rng).unwrap();
        for _ in 0..100 {
            let a = agent.act_explore(&[0.0, 1.0, 2.0], &mut rng).unwrap();
            assert!(a.iter().all(|x| (-1.0..=1.0).contains(x)));
        }
    }

    #[test]
    fn config_validation() {
        assert!(Td3Config { gamma: 1.0, ..Td3Config::default() }.validate().is_err());
        assert!(Td3Config { policy_delay: 0, ..Td3Config::default() }.validate().is_err());
        assert!(Td3Config { buffer_capacity: 10, ..Td3Config::default() }.validate().is_err());
    }
}
