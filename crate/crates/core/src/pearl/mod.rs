//! Latent-context actor-critic agent.
//!
//! The encoder turns a context of transitions into a Gaussian posterior over
//! a task embedding `z`; the squashed-Gaussian actor and the twin critics are
//! conditioned on `z`. Critic gradients flow into the encoder, actor gradients
//! do not.

mod buffers;
mod checkpoint;
mod encoder;
mod losses;
mod rollout;

use rand::Rng;
use rand_distr::StandardNormal;

pub use buffers::{TaskReplayBuffers, DEFAULT_CAPACITY};
pub use encoder::{context_row, context_tensor, encode_context, GaussianPosterior};
pub use losses::{ActorLoss, CriticLoss, CriticNoise, TrainStats};
pub use rollout::{AdaptedPolicy, MetaTestOutcome};

use crate::envs::TaskFamily;
use crate::nn::{Activation, Adam, AdamConfig, ForwardCache, Head, Mlp, Tensor};
use crate::{Error, Result};

/// Keeps `log(1 - tanh(u)^2)` finite at saturation.
pub(crate) const TANH_EPS: f64 = 1e-6;
const HALF_LOG_TWO_PI: f64 = 0.918_938_533_204_672_7;

#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub obs_dim: usize,
    pub action_dim: usize,
    /// Environment actions are `tanh(u) * action_bound`.
    pub action_bound: f64,
    pub latent_dim: usize,
    pub hidden: Vec<usize>,
    pub gamma: f64,
    /// Entropy weight.
    pub alpha: f64,
    pub target_coef: f64,
    /// Weight of `KL(q(z|c) || N(0, I))`; zero disables it.
    pub kl_weight: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub encoder_lr: f64,
    /// Transitions per task per gradient update.
    pub batch_size: usize,
    /// Tasks sampled per gradient update.
    pub meta_batch: usize,
    /// Most recent transitions of a task's buffer used as its training context.
    pub context_size: usize,
    pub updates_per_trajectory: usize,
}

impl AgentConfig {
    pub fn for_family(family: &TaskFamily) -> Self {
        Self {
            obs_dim: family.obs_dim(),
            action_dim: family.action_dim(),
            action_bound: family.action_bound(),
            latent_dim: 5,
            hidden: vec![128, 128],
            gamma: family.gamma(),
            alpha: 0.2,
            target_coef: 0.005,
            kl_weight: 0.1,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            encoder_lr: 3e-4,
            batch_size: 256,
            meta_batch: 4,
            context_size: 64,
            updates_per_trajectory: 40,
        }
    }

    pub fn encoder_input_dim(&self) -> usize {
        2 * self.obs_dim + self.action_dim + 1
    }

    pub fn actor_input_dim(&self) -> usize {
        self.obs_dim + self.latent_dim
    }

    pub fn critic_input_dim(&self) -> usize {
        self.obs_dim + self.action_dim + self.latent_dim
    }

    fn widths(&self, input: usize, output: usize) -> Vec<usize> {
        let mut w = vec![input];
        w.extend_from_slice(&self.hidden);
        w.push(output);
        w
    }
}

/// Squashed-Gaussian draw for a batch of `[s, z]` rows.
pub(crate) struct PolicySample {
    /// `tanh(u)`, in `[-1, 1]` per component.
    pub actions: Vec<f64>,
    pub log_probs: Vec<f64>,
    /// Actor output rows `[mean | log_var]`.
    pub dist: Tensor,
    pub noise: Vec<f64>,
    pub cache: ForwardCache,
}

#[derive(Debug, Clone)]
pub struct Agent {
    pub config: AgentConfig,
    pub actor: Mlp,
    pub critic1: Mlp,
    pub critic2: Mlp,
    pub target1: Mlp,
    pub target2: Mlp,
    pub encoder: Mlp,
    actor_opt: Adam,
    critic1_opt: Adam,
    critic2_opt: Adam,
    encoder_opt: Adam,
}

impl Agent {
    pub fn new<R: Rng + ?Sized>(config: AgentConfig, rng: &mut R) -> Result<Self> {
        if config.alpha < 0.0 {
            return Err(Error::invalid("entropy weight must be non-negative"));
        }
        let act = Activation::Relu;
        let actor = Mlp::new(&config.widths(config.actor_input_dim(), 2 * config.action_dim), act, Head::Gaussian, rng)?;
        let critic_w = config.widths(config.critic_input_dim(), 1);
        let critic1 = Mlp::new(&critic_w, act, Head::Identity, rng)?;
        let critic2 = Mlp::new(&critic_w, act, Head::Identity, rng)?;
        let encoder = Mlp::new(&config.widths(config.encoder_input_dim(), 2 * config.latent_dim), act, Head::Gaussian, rng)?;
        let adam = |lr: f64, n: usize| Adam::new(n, AdamConfig { lr, ..AdamConfig::default() });
        Ok(Self {
            actor_opt: adam(config.actor_lr, actor.num_params()),
            critic1_opt: adam(config.critic_lr, critic1.num_params()),
            critic2_opt: adam(config.critic_lr, critic2.num_params()),
            encoder_opt: adam(config.encoder_lr, encoder.num_params()),
            target1: critic1.clone(),
            target2: critic2.clone(),
            actor,
            critic1,
            critic2,
            encoder,
            config,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }

    /// `target <- (1 - coef) target + coef online` for both critics.
    pub fn soft_update_targets(&mut self, coef: f64) -> Result<()> {
        if !(coef > 0.0 && coef <= 1.0) {
            return Err(Error::invalid(format!("target coefficient must be in (0, 1], got {coef}")));
        }
        self.target1.blend_from(&self.critic1, coef)?;
        self.target2.blend_from(&self.critic2, coef)
    }

    pub fn posterior(&self, context: &[crate::envs::Transition]) -> Result<GaussianPosterior> {
        encode_context(&self.encoder, context, self.config.action_bound)
    }

    pub(crate) fn actor_rows<'a>(&self, states: impl Iterator<Item = &'a [f64]>, z: &[f64]) -> Result<Tensor> {
        let width = self.config.actor_input_dim();
        let mut data = Vec::new();
        for s in states {
            data.extend_from_slice(s);
            data.extend_from_slice(z);
        }
        let rows = data.len() / width;
        Tensor::matrix(rows, width, data)
    }

    /// Rows `[s, a, z]` with `a` already normalized to `[-1, 1]`.
    pub(crate) fn critic_rows(&self, states: &[f64], actions: &[f64], z: &[f64]) -> Result<Tensor> {
        let (s_dim, a_dim) = (self.config.obs_dim, self.config.action_dim);
        let rows = states.len() / s_dim;
        let width = self.config.critic_input_dim();
        let mut data = Vec::with_capacity(rows * width);
        for i in 0..rows {
            data.extend_from_slice(&states[i * s_dim..(i + 1) * s_dim]);
            data.extend_from_slice(&actions[i * a_dim..(i + 1) * a_dim]);
            data.extend_from_slice(z);
        }
        Tensor::matrix(rows, width, data)
    }

    /// Reparameterized squashed-Gaussian actions for prepared actor rows.
    pub(crate) fn sample_policy(&self, rows: &Tensor, noise: Vec<f64>) -> Result<PolicySample> {
        let a_dim = self.config.action_dim;
        let (dist, cache) = self.actor.forward_cached(rows)?;
        let n = rows.rows();
        if noise.len() != n * a_dim {
            return Err(Error::DimensionMismatch {
                context: "policy noise",
                expected: n * a_dim,
                actual: noise.len(),
            });
        }
        let mut actions = Vec::with_capacity(n * a_dim);
        let mut log_probs = Vec::with_capacity(n);
        for i in 0..n {
            let row = dist.row(i);
            let mut lp = 0.0;
            for j in 0..a_dim {
                let (m, lv) = (row[j], row[a_dim + j]);
                let eps = noise[i * a_dim + j];
                let a = (m + (0.5 * lv).exp() * eps).tanh();
                lp += -0.5 * eps * eps - HALF_LOG_TWO_PI - 0.5 * lv - (1.0 - a * a + TANH_EPS).ln();
                actions.push(a);
            }
            log_probs.push(lp);
        }
        Ok(PolicySample {
            actions,
            log_probs,
            dist,
            noise,
            cache,
        })
    }

    pub(crate) fn standard_normal<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    /// Environment-scale action for one state. Deterministic mode uses `tanh(mean)`.
    pub fn act<R: Rng + ?Sized>(&self, state: &[f64], z: &[f64], deterministic: bool, rng: &mut R) -> Result<Vec<f64>> {
        let rows = self.actor_rows(std::iter::once(state), z)?;
        let bound = self.config.action_bound;
        if deterministic {
            let out = self.actor.forward(&rows)?;
            Ok(out.data()[..self.config.action_dim].iter().map(|m| m.tanh() * bound).collect())
        } else {
            let noise = Self::standard_normal(rng, self.config.action_dim);
            let sample = self.sample_policy(&rows, noise)?;
            Ok(sample.actions.iter().map(|a| a * bound).collect())
        }
    }

    /// `min(Q1, Q2)` for normalized actions.
    pub fn min_q(&self, states: &[f64], actions: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        let rows = self.critic_rows(states, actions, z)?;
        let q1 = self.critic1.forward(&rows)?;
        let q2 = self.critic2.forward(&rows)?;
        Ok(q1.data().iter().zip(q2.data()).map(|(a, b)| a.min(*b)).collect())
    }

    /// `min(target Q1, target Q2) - alpha * log pi(a'|s', z)` with `a' ~ pi`.
    pub fn soft_value(&self, states: &[f64], z: &[f64], noise: Vec<f64>, use_targets: bool) -> Result<Vec<f64>> {
        let rows = self.actor_rows(states.chunks(self.config.obs_dim), z)?;
        let sample = self.sample_policy(&rows, noise)?;
        let crit = self.critic_rows(states, &sample.actions, z)?;
        let (c1, c2) = if use_targets {
            (&self.target1, &self.target2)
        } else {
            (&self.critic1, &self.critic2)
        };
        let q1 = c1.forward(&crit)?;
        let q2 = c2.forward(&crit)?;
        Ok(q1
            .data()
            .iter()
            .zip(q2.data())
            .zip(&sample.log_probs)
            .map(|((a, b), lp)| a.min(*b) - self.config.alpha * lp)
            .collect())
    }
}
