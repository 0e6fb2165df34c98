//! Tanh-squashed diagonal Gaussian policy head.

use rand::Rng;
use rand_distr::StandardNormal;

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LOG_TWO_PI: f64 = 0.918_938_533_204_672_8;

/// `ln(1 − tanh²(u))` without cancellation: `2 (ln 2 − u − softplus(−2u))`.
pub fn log_one_minus_tanh_sq(u: f64) -> f64 {
    let x = -2.0 * u;
    let softplus = x.max(0.0) + (-x.abs()).exp().ln_1p();
    2.0 * (std::f64::consts::LN_2 - u - softplus)
}

/// Log-density of `a = tanh(u)` where `u ~ N(mean, exp(log_std)²)`,
/// evaluated at the pre-squash point `u`.
pub fn squashed_log_prob(mean: &[f64], log_std: &[f64], u: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(u)
        .map(|((&m, &ls), &ui)| {
            let eps = (ui - m) / ls.exp();
            -0.5 * eps * eps - ls - HALF_LOG_TWO_PI - log_one_minus_tanh_sq(ui)
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianHead {
    pub mean: Vec<f64>,
    /// Clamped to `[LOG_STD_MIN, LOG_STD_MAX]`.
    pub log_std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SquashedSample {
    pub pre_tanh: Vec<f64>,
    pub action: Vec<f64>,
    pub log_prob: f64,
}

impl GaussianHead {
    pub fn new(mean: Vec<f64>, log_std: Vec<f64>) -> Self {
        assert_eq!(mean.len(), log_std.len());
        let log_std = log_std.into_iter().map(|l| l.clamp(LOG_STD_MIN, LOG_STD_MAX)).collect();
        Self { mean, log_std }
    }

    /// Splits a raw network output `[mean | log_std]`.
    pub fn from_raw(raw: &[f64]) -> Self {
        let k = raw.len() / 2;
        Self::new(raw[..k].to_vec(), raw[k..2 * k].to_vec())
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `tanh(mean)`, the noise-free action.
    pub fn deterministic(&self) -> Vec<f64> {
        self.mean.iter().map(|m| m.tanh()).collect()
    }

    /// Reparameterized sample `u = mean + std·ε`, `a = tanh(u)`.
    pub fn sample_with_noise(&self, noise: &[f64]) -> SquashedSample {
        assert_eq!(noise.len(), self.dim());
        let pre_tanh: Vec<f64> = self
            .mean
            .iter()
            .zip(&self.log_std)
            .zip(noise)
            .map(|((m, ls), e)| m + ls.exp() * e)
            .collect();
        let action = pre_tanh.iter().map(|u| u.tanh()).collect();
        let log_prob = squashed_log_prob(&self.mean, &self.log_std, &pre_tanh);
        SquashedSample {
            pre_tanh,
            action,
            log_prob,
        }
    }
}

/// Draws a squashed action and its log-probability.
pub fn sample_gaussian_head<R: Rng + ?Sized>(head: &GaussianHead, rng: &mut R) -> (Vec<f64>, f64) {
    let noise: Vec<f64> = (0..head.dim()).map(|_| rng.sample(StandardNormal)).collect();
    let s = head.sample_with_noise(&noise);
    (s.action, s.log_prob)
}
