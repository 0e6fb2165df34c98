//! Soft actor-critic with automatic temperature tuning.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::td3::{critic_step, to_action};
use super::{Batch, RlError, ACTION_DIM};
use crate::nn::{sample_gaussian_head, AdamState, GaussianHead, Matrix, Mlp, LOG_STD_MAX, LOG_STD_MIN};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SacConfig {
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub warmup_steps: usize,
    pub buffer_capacity: usize,
    pub target_entropy: f64,
    pub init_alpha: f64,
    pub alpha_lr: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 0.005,
            batch_size: 256,
            warmup_steps: 1000,
            buffer_capacity: 1_000_000,
            target_entropy: -(ACTION_DIM as f64),
            init_alpha: 0.2,
            alpha_lr: 3e-4,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
        }
    }
}

impl SacConfig {
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
        if self.batch_size == 0 {
            return bad("batch_size", "must be positive");
        }
        if self.buffer_capacity < self.batch_size {
            return bad("buffer_capacity", "must be at least the batch size");
        }
        if !self.target_entropy.is_finite() {
            return bad("target_entropy", "must be finite");
        }
        for (name, v) in [
            ("init_alpha", self.init_alpha),
            ("alpha_lr", self.alpha_lr),
            ("actor_lr", self.actor_lr),
            ("critic_lr", self.critic_lr),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(name, "must be positive");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SacDiagnostics {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha: f64,
    /// Batch mean of `−log π(a|s)` for freshly sampled actions.
    pub entropy: f64,
}

/// `∂J/∂ log α` for the temperature loss `J = −log α · (log π + H̄)`,
/// averaged over the batch. Positive when the policy entropy exceeds the
/// target, so gradient descent then lowers the temperature.
pub fn temperature_gradient(mean_log_prob: f64, target_entropy: f64) -> f64 {
    -(mean_log_prob + target_entropy)
}

#[derive(Debug, Clone)]
pub struct SacAgent {
    cfg: SacConfig,
    /// Emits `[mean | log_std]` per action dimension.
    pub actor: Mlp,
    pub critic1: Mlp,
    pub critic2: Mlp,
    pub critic1_target: Mlp,
    pub critic2_target: Mlp,
    log_alpha: f64,
    actor_opt: AdamState,
    critic1_opt: AdamState,
    critic2_opt: AdamState,
    alpha_opt: AdamState,
    updates: u64,
}

struct ActorSample {
    head: GaussianHead,
    raw_log_std: Vec<f64>,
    noise: Vec<f64>,
    action: Vec<f64>,
    log_prob: f64,
}

impl SacAgent {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, hidden: usize, cfg: SacConfig, rng: &mut R) -> Result<Self, RlError> {
        cfg.validate()?;
        let actor = Mlp::gaussian_actor(obs_dim, hidden, ACTION_DIM, rng);
        let critic1 = Mlp::critic(obs_dim + ACTION_DIM, hidden, rng);
        let critic2 = Mlp::critic(obs_dim + ACTION_DIM, hidden, rng);
        Ok(Self {
            cfg,
            actor_opt: AdamState::new(actor.num_params(), cfg.actor_lr),
            critic1_opt: AdamState::new(critic1.num_params(), cfg.critic_lr),
            critic2_opt: AdamState::new(critic2.num_params(), cfg.critic_lr),
            alpha_opt: AdamState::new(1, cfg.alpha_lr),
            critic1_target: critic1.clone(),
            critic2_target: critic2.clone(),
            log_alpha: cfg.init_alpha.ln(),
            actor,
            critic1,
            critic2,
            updates: 0,
        })
    }

    pub fn config(&self) -> &SacConfig {
        &self.cfg
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// `tanh(mean)`.
    pub fn act(&self, obs: &[f64]) -> Result<[f64; ACTION_DIM], RlError> {
        let raw = self.actor.predict_one(obs)?;
        Ok(to_action(&GaussianHead::from_raw(&raw).deterministic()))
    }

    pub fn act_explore<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<[f64; ACTION_DIM], RlError> {
        let raw = self.actor.predict_one(obs)?;
        let (a, _) = sample_gaussian_head(&GaussianHead::from_raw(&raw), rng);
        Ok(to_action(&a))
    }

    fn sample_rows<R: Rng + ?Sized>(raw: &Matrix, rng: &mut R) -> Vec<ActorSample> {
        (0..raw.rows())
            .map(|i| {
                let row = raw.row(i);
                let head = GaussianHead::from_raw(row);
                let noise: Vec<f64> = (0..ACTION_DIM).map(|_| rng.sample(StandardNormal)).collect();
                let s = head.sample_with_noise(&noise);
                ActorSample {
                    raw_log_std: row[ACTION_DIM..].to_vec(),
                    head,
                    noise,
                    action: s.action,
                    log_prob: s.log_prob,
                }
            })
            .collect()
    }

    fn actions_matrix(samples: &[ActorSample]) -> Matrix {
        let data = samples.iter().flat_map(|s| s.action.iter().copied()).collect();
        Matrix::from_vec(samples.len(), ACTION_DIM, data).unwrap()
    }

    /// Soft double-Q targets `r + γ(1 − d)(min Q′(s′, a′) − α log π(a′|s′))`.
    pub fn targets<R: Rng + ?Sized>(&self, batch: &Batch, rng: &mut R) -> Result<Vec<f64>, RlError> {
        let raw = self.actor.predict(&batch.next_obs)?;
        let samples = Self::sample_rows(&raw, rng);
        let input = batch.next_obs.hcat(&Self::actions_matrix(&samples))?;
        let q1 = self.critic1_target.predict(&input)?;
        let q2 = self.critic2_target.predict(&input)?;
        let alpha = self.alpha();
        Ok((0..batch.len())
            .map(|i| {
                let soft_v = q1.data()[i].min(q2.data()[i]) - alpha * samples[i].log_prob;
                batch.rewards[i] + self.cfg.gamma * (1.0 - batch.done[i]) * soft_v
            })
            .collect())
    }

    pub fn update<R: Rng + ?Sized>(&mut self, batch: &Batch, rng: &mut R) -> Result<SacDiagnostics, RlError> {
        let y = self.targets(batch, rng)?;
        let input = batch.obs.hcat(&batch.actions)?;
        let l1 = critic_step(&mut self.critic1, &mut self.critic1_opt, &input, &y)?;
        let l2 = critic_step(&mut self.critic2, &mut self.critic2_opt, &input, &y)?;

        let alpha = self.alpha();
        let (actor_loss, mean_log_prob) = self.actor_step(&batch.obs, alpha, rng)?;

        let mut log_alpha = [self.log_alpha];
        let g = temperature_gradient(mean_log_prob, self.cfg.target_entropy);
        self.alpha_opt.step(&mut log_alpha, &[g])?;
        self.log_alpha = log_alpha[0];

        let tau = self.cfg.tau;
        self.critic1_target.soft_update_from(&self.critic1, tau)?;
        self.critic2_target.soft_update_from(&self.critic2, tau)?;
        self.updates += 1;
        Ok(SacDiagnostics {
            critic_loss: 0.5 * (l1 + l2),
            actor_loss,
            alpha: self.alpha(),
            entropy: -mean_log_prob,
        })
    }

    /// Reparameterized step on `E[α log π(a|s) − min Q(s, a)]`.
    fn actor_step<R: Rng + ?Sized>(&mut self, obs: &Matrix, alpha: f64, rng: &mut R) -> Result<(f64, f64), RlError> {
        let n = obs.rows();
        let nf = n as f64;
        let (raw, actor_cache) = self.actor.forward(obs)?;
        let samples = Self::sample_rows(&raw, rng);
        let input = obs.hcat(&Self::actions_matrix(&samples))?;
        let (q1, c1) = self.critic1.forward(&input)?;
        let (q2, c2) = self.critic2.forward(&input)?;

        let mut g1 = Matrix::zeros(n, 1);
        let mut g2 = Matrix::zeros(n, 1);
        let mut loss = 0.0;
        let mut mean_log_prob = 0.0;
        for i in 0..n {
            let (a, b) = (q1.data()[i], q2.data()[i]);
            if a <= b {
                g1.data_mut()[i] = -1.0 / nf;
            } else {
                g2.data_mut()[i] = -1.0 / nf;
            }
            loss += alpha * samples[i].log_prob - a.min(b);
            mean_log_prob += samples[i].log_prob;
        }
        loss /= nf;
        mean_log_prob /= nf;
        if !loss.is_finite() {
            return Err(RlError::NonFiniteLoss("actor"));
        }
        let d1 = self.critic1.backward_input(&c1, &g1)?;
        let d2 = self.critic2.backward_input(&c2, &g2)?;
        let d = obs.cols();

        // chain through a = tanh(u), u = μ + σ ε, with log π depending on u via
        // −ln(1 − tanh² u) (derivative 2a) and on log σ directly (−1)
        let mut grad_raw = Matrix::zeros(n, 2 * ACTION_DIM);
        for (i, s) in samples.iter().enumerate() {
            let row = grad_raw.row_mut(i);
            for j in 0..ACTION_DIM {
                let a = s.action[j];
                let dl_da = d1.get(i, d + j) + d2.get(i, d + j);
                let dl_du = dl_da * (1.0 - a * a) + alpha * 2.0 * a / nf;
                row[j] = dl_du;
                let raw_ls = s.raw_log_std[j];
                if (LOG_STD_MIN..=LOG_STD_MAX).contains(&raw_ls) {
                    let sigma = s.head.log_std[j].exp();
                    row[ACTION_DIM + j] = dl_du * sigma * s.noise[j] - alpha / nf;
                }
            }
        }
        let g = self.actor.backward(&actor_cache, &grad_raw)?;
        self.actor.apply_adam(&g.params, &mut self.actor_opt)?;
        Ok((loss, mean_log_prob))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::squashed_log_prob;
    use crate::rl::Transition;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

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
    fn temperature_gradient_flips_at_target() {
        let target = -4.0;
        // entropy H = −mean log π
        assert!(temperature_gradient(-5.0, target) > 0.0); // H = 5 > −4
        assert!(temperature_gradient(4.5, target) < 0.0); // H = −4.5 < −4
        assert_eq!(temperature_gradient(4.0, target), 0.0);
    }

    #[test]
    fn terminal_target_has_no_bootstrap() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let agent = SacAgent::new(3, 16, SacConfig::default(), &mut rng).unwrap();
        let batch = Batch::repeat(&terminal_transition(), 8);
        let y = agent.targets(&batch, &mut rng).unwrap();
        assert!(y.iter().all(|&v| v == 0.07));
    }

    #[test]
    fn non_terminal_target_matches_hand_computation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let agent = SacAgent::new(3, 16, SacConfig::default(), &mut rng).unwrap();
        let mut t = terminal_transition();
        t.done = false;
        let batch = Batch::repeat(&t, 1);
        let mut r1 = ChaCha8Rng::seed_from_u64(5);
        let y = agent.targets(&batch, &mut r1).unwrap()[0];

        let mut r2 = ChaCha8Rng::seed_from_u64(5);
        let raw = agent.actor.predict_one(&t.next_obs).unwrap();
        let head = GaussianHead::from_raw(&raw);
        let eps: Vec<f64> = (0..4).map(|_| r2.sample(StandardNormal)).collect();
        let u: Vec<f64> = head.mean.iter().zip(&head.log_std).zip(&eps).map(|((m, l), e)| m + l.exp() * e).collect();
        let a: Vec<f64> = u.iter().map(|v| v.tanh()).collect();
        let logp = squashed_log_prob(&head.mean, &head.log_std, &u);
        let mut inp = t.next_obs.clone();
        inp.extend(&a);
        let q = agent.critic1_target.predict_one(&inp).unwrap()[0].min(agent.critic2_target.predict_one(&inp).unwrap()[0]);
        let expected = t.reward + 0.99 * (q - agent.alpha() * logp);
        assert!((y - expected).abs() < 1e-14);
    }

    #[test]
    fn entropy_decreases_with_log_std() {
        // Monte-Carlo estimate of −E[log π] for the squashed Gaussian. Only
        // below σ ≈ 1: wider Gaussians pile mass against ±1 after squashing.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut last = f64::INFINITY;
        for ls in [-0.5, -1.0, -1.5, -2.0, -3.0] {
            let head = GaussianHead::new(vec![0.3; 4], vec![ls; 4]);
            let n = 20_000;
            let h = -(0..n).map(|_| sample_gaussian_head(&head, &mut rng).1).sum::<f64>() / n as f64;
            assert!(h < last, "entropy {h} at log_std {ls} not below {last}");
            last = h;
        }
    }

    #[test]
    fn temperature_tracks_entropy_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut agent = SacAgent::new(3, 16, SacConfig::default(), &mut rng).unwrap();
        let batch = Batch::repeat(&terminal_transition(), 16);
        // a fresh policy is far more random than the target, so α falls
        let a0 = agent.alpha();
        let d = agent.update(&batch, &mut rng).unwrap();
        assert!(d.entropy > agent.config().target_entropy);
        assert!(agent.alpha() < a0);
        assert!(d.critic_loss.is_finite() && d.actor_loss.is_finite());
    }

    #[test]
    fn critics_converge_on_terminal_set() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = SacConfig {
            critic_lr: 1e-3,
            ..SacConfig::default()
        };
        let mut agent = SacAgent::new(3, 32, cfg, &mut rng).unwrap();
        let batch = Batch::repeat(&terminal_transition(), 32);
        let mut last = f64::INFINITY;
        for _ in 0..2000 {
            last = agent.update(&batch, &mut rng).unwrap().critic_loss;
        }
        assert!(last < 1e-8, "{last}");
    }
}
