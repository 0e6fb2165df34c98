use rand::Rng;

use super::{RlError, ACTION_DIM};
use crate::nn::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    /// Actor-scale action in `[−1, 1]⁴`.
    pub action: [f64; ACTION_DIM],
    pub reward: f64,
    pub next_obs: Vec<f64>,
    /// True only when the episode ended by leaving the allowed region; a
    /// horizon cut-off still bootstraps.
    pub done: bool,
    /// Thrusts applied on the previous step, kept for diagnostics.
    pub prev_thrusts: [f64; ACTION_DIM],
}

/// Sampled minibatch, one transition per row.
#[derive(Debug, Clone)]
pub struct Batch {
    pub obs: Matrix,
    pub actions: Matrix,
    pub rewards: Vec<f64>,
    pub next_obs: Matrix,
    pub done: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// Every row equal to `t`.
    pub fn repeat(t: &Transition, n: usize) -> Batch {
        let rows = |v: &[f64]| Matrix::from_vec(n, v.len(), v.repeat(n)).unwrap();
        Batch {
            obs: rows(&t.obs),
            actions: rows(&t.action),
            rewards: vec![t.reward; n],
            next_obs: rows(&t.next_obs),
            done: vec![if t.done { 1.0 } else { 0.0 }; n],
        }
    }
}

/// Fixed-capacity ring of transitions stored column-wise in flat arrays.
/// Storage grows on demand up to the capacity.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    obs_dim: usize,
    capacity: usize,
    next: usize,
    len: usize,
    obs: Vec<f64>,
    actions: Vec<f64>,
    rewards: Vec<f64>,
    next_obs: Vec<f64>,
    done: Vec<f64>,
    prev_thrusts: Vec<f64>,
}

impl ReplayBuffer {
    pub fn new(obs_dim: usize, capacity: usize) -> Result<Self, RlError> {
        if capacity == 0 || obs_dim == 0 {
            return Err(RlError::InvalidConfig {
                name: "buffer_capacity",
                reason: "capacity and observation size must be positive".into(),
            });
        }
        Ok(Self {
            obs_dim,
            capacity,
            next: 0,
            len: 0,
            obs: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            next_obs: Vec::new(),
            done: Vec::new(),
            prev_thrusts: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn push(&mut self, t: &Transition) -> Result<(), RlError> {
        for (what, got) in [("observation", t.obs.len()), ("next observation", t.next_obs.len())] {
            if got != self.obs_dim {
                return Err(RlError::InvalidConfig {
                    name: "transition",
                    reason: format!("{what} has {got} entries, buffer expects {}", self.obs_dim),
                });
            }
        }
        let d = self.obs_dim;
        if self.len < self.capacity {
            self.obs.extend_from_slice(&t.obs);
            self.actions.extend_from_slice(&t.action);
            self.rewards.push(t.reward);
            self.next_obs.extend_from_slice(&t.next_obs);
            self.done.push(if t.done { 1.0 } else { 0.0 });
            self.prev_thrusts.extend_from_slice(&t.prev_thrusts);
            self.len += 1;
        } else {
            let i = self.next;
            self.obs[i * d..(i + 1) * d].copy_from_slice(&t.obs);
            self.actions[i * ACTION_DIM..(i + 1) * ACTION_DIM].copy_from_slice(&t.action);
            self.rewards[i] = t.reward;
            self.next_obs[i * d..(i + 1) * d].copy_from_slice(&t.next_obs);
            self.done[i] = if t.done { 1.0 } else { 0.0 };
            self.prev_thrusts[i * ACTION_DIM..(i + 1) * ACTION_DIM].copy_from_slice(&t.prev_thrusts);
        }
        self.next = (self.next + 1) % self.capacity;
        Ok(())
    }

    pub fn get(&self, i: usize) -> Option<Transition> {
        if i >= self.len {
            return None;
        }
        let d = self.obs_dim;
        let a = i * ACTION_DIM..(i + 1) * ACTION_DIM;
        Some(Transition {
            obs: self.obs[i * d..(i + 1) * d].to_vec(),
            action: self.actions[a.clone()].try_into().unwrap(),
            reward: self.rewards[i],
            next_obs: self.next_obs[i * d..(i + 1) * d].to_vec(),
            done: self.done[i] != 0.0,
            prev_thrusts: self.prev_thrusts[a].try_into().unwrap(),
        })
    }

    /// Uniform sample with replacement over the filled slots.
    pub fn sample<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Option<Batch> {
        if self.len == 0 || batch_size == 0 {
            return None;
        }
        let d = self.obs_dim;
        let mut obs = Vec::with_capacity(batch_size * d);
        let mut next_obs = Vec::with_capacity(batch_size * d);
        let mut actions = Vec::with_capacity(batch_size * ACTION_DIM);
        let mut rewards = Vec::with_capacity(batch_size);
        let mut done = Vec::with_capacity(batch_size);
        for _ in 0..batch_size {
            let i = rng.random_range(0..self.len);
            obs.extend_from_slice(&self.obs[i * d..(i + 1) * d]);
            next_obs.extend_from_slice(&self.next_obs[i * d..(i + 1) * d]);
            actions.extend_from_slice(&self.actions[i * ACTION_DIM..(i + 1) * ACTION_DIM]);
            rewards.push(self.rewards[i]);
            done.push(self.done[i]);
        }
        Some(Batch {
            obs: Matrix::from_vec(batch_size, d, obs).unwrap(),
            actions: Matrix::from_vec(batch_size, ACTION_DIM, actions).unwrap(),
            rewards,
            next_obs: Matrix::from_vec(batch_size, d, next_obs).unwrap(),
            done,
        })
    }
}
