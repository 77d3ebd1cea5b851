//! Actor and critic/encoder objectives with explicit gradients.

use rand::Rng;

use super::encoder::encode_context_cached;
use super::{Agent, TANH_EPS};
use crate::envs::Transition;
use crate::nn::Tensor;
use crate::pearl::TaskReplayBuffers;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct ActorLoss {
    pub loss: f64,
    pub grads: Vec<f64>,
}

/// Every random draw the critic objective consumes, so it can be replayed
/// exactly (finite-difference checks rely on this).
#[derive(Debug, Clone)]
pub struct CriticNoise {
    /// Reparameterization noise for `z ~ q(z|c)`, one per latent dimension.
    pub latent: Vec<f64>,
    /// Noise for the next actions `a' ~ pi(.|s', z)`, `[batch, action_dim]`.
    pub next_action: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct CriticLoss {
    /// `td1 + td2 + kl_weight * kl`.
    pub loss: f64,
    pub td1: f64,
    pub td2: f64,
    pub kl: f64,
    pub critic1_grads: Vec<f64>,
    pub critic2_grads: Vec<f64>,
    pub encoder_grads: Vec<f64>,
    /// The sampled latent (the actor update treats it as a constant).
    pub z: Vec<f64>,
    /// Bootstrapped targets `r + gamma (1 - done) V(s', z)`.
    pub targets: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TrainStats {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub kl: f64,
}

fn flatten(batch: &[Transition], f: impl Fn(&Transition) -> &[f64]) -> Vec<f64> {
    batch.iter().flat_map(|t| f(t).iter().copied()).collect()
}

impl Agent {
    pub fn actor_loss<R: Rng + ?Sized>(&self, batch: &[Transition], z: &[f64], rng: &mut R) -> Result<ActorLoss> {
        let noise = Self::standard_normal(rng, batch.len() * self.config.action_dim);
        let states = flatten(batch, |t| &t.state);
        self.actor_loss_with_noise(&states, z, noise)
    }

    /// `mean[alpha * log pi(a|s,z) - min(Q1, Q2)(s, a, z)]` with `a = tanh(mean + std * noise)`.
    ///
    /// `z` is a constant here and the critics are read-only; only actor
    /// gradients are returned.
    pub fn actor_loss_with_noise(&self, states: &[f64], z: &[f64], noise: Vec<f64>) -> Result<ActorLoss> {
        let (s_dim, a_dim) = (self.config.obs_dim, self.config.action_dim);
        if states.is_empty() {
            return Err(Error::Empty("actor batch"));
        }
        let n = states.len() / s_dim;
        let alpha = self.config.alpha;
        let rows = self.actor_rows(states.chunks(s_dim), z)?;
        let sample = self.sample_policy(&rows, noise)?;

        let crit = self.critic_rows(states, &sample.actions, z)?;
        let (q1, c1) = self.critic1.forward_cached(&crit)?;
        let (q2, c2) = self.critic2.forward_cached(&crit)?;
        let mut pick1 = vec![0.0; n];
        let mut pick2 = vec![0.0; n];
        let mut loss = 0.0;
        for i in 0..n {
            let (a, b) = (q1.data()[i], q2.data()[i]);
            if a <= b {
                pick1[i] = 1.0;
            } else {
                pick2[i] = 1.0;
            }
            loss += alpha * sample.log_probs[i] - a.min(b);
        }
        loss /= n as f64;
        let g1 = self.critic1.backward_cached(&c1, &Tensor::matrix(n, 1, pick1)?)?;
        let g2 = self.critic2.backward_cached(&c2, &Tensor::matrix(n, 1, pick2)?)?;

        let width = self.config.critic_input_dim();
        let inv_n = 1.0 / n as f64;
        let mut d_dist = vec![0.0; n * 2 * a_dim];
        for i in 0..n {
            let row = sample.dist.row(i);
            for j in 0..a_dim {
                let a = sample.actions[i * a_dim + j];
                let dq_da = g1.input.data()[i * width + s_dim + j] + g2.input.data()[i * width + s_dim + j];
                let one_m = 1.0 - a * a;
                let d_u = (alpha * 2.0 * a * one_m / (one_m + TANH_EPS) - dq_da * one_m) * inv_n;
                let eps = sample.noise[i * a_dim + j];
                let std = (0.5 * row[a_dim + j]).exp();
                d_dist[i * 2 * a_dim + j] = d_u;
                d_dist[i * 2 * a_dim + a_dim + j] = -0.5 * alpha * inv_n + d_u * 0.5 * std * eps;
            }
        }
        let grads = self.actor.backward_cached(&sample.cache, &Tensor::matrix(n, 2 * a_dim, d_dist)?)?;
        Ok(ActorLoss {
            loss,
            grads: grads.params,
        })
    }

    pub fn critic_and_encoder_loss<R: Rng + ?Sized>(&self, batch: &[Transition], context: &[Transition], rng: &mut R) -> Result<CriticLoss> {
        let noise = CriticNoise {
            latent: Self::standard_normal(rng, self.config.latent_dim),
            next_action: Self::standard_normal(rng, batch.len() * self.config.action_dim),
        };
        self.critic_and_encoder_loss_with_noise(batch, context, &noise)
    }

    /// TD loss of both critics plus the encoder's KL-to-prior term.
    ///
    /// `z = mean + sqrt(var) * noise` is drawn from `q(z|c)` and feeds the
    /// online critics, so their input gradient reaches the encoder. The
    /// bootstrap target uses the same latent value as a constant and the target
    /// critics, neither of which receives gradient.
    pub fn critic_and_encoder_loss_with_noise(&self, batch: &[Transition], context: &[Transition], noise: &CriticNoise) -> Result<CriticLoss> {
        self.critic_loss_impl(batch, context, noise, None)
    }

    /// Same objective with the bootstrap targets supplied by the caller.
    pub fn critic_loss_with_fixed_targets(
        &self,
        batch: &[Transition],
        context: &[Transition],
        noise: &CriticNoise,
        targets: &[f64],
    ) -> Result<CriticLoss> {
        if targets.len() != batch.len() {
            return Err(Error::DimensionMismatch {
                context: "critic targets",
                expected: batch.len(),
                actual: targets.len(),
            });
        }
        self.critic_loss_impl(batch, context, noise, Some(targets))
    }

    /// `r + gamma (1 - done) V_target(s', z)`.
    pub fn td_targets(&self, batch: &[Transition], z: &[f64], next_action_noise: Vec<f64>) -> Result<Vec<f64>> {
        let next_states = flatten(batch, |t| &t.next_state);
        let next_v = self.soft_value(&next_states, z, next_action_noise, true)?;
        let gamma = self.config.gamma;
        Ok(batch
            .iter()
            .zip(&next_v)
            .map(|(t, v)| t.reward + if t.done { 0.0 } else { gamma * v })
            .collect())
    }

    fn critic_loss_impl(&self, batch: &[Transition], context: &[Transition], noise: &CriticNoise, fixed: Option<&[f64]>) -> Result<CriticLoss> {
        if batch.is_empty() {
            return Err(Error::Empty("critic batch"));
        }
        let enc = encode_context_cached(&self.encoder, context, self.config.action_bound)?.ok_or(Error::Empty("context"))?;
        let post = &enc.posterior;
        let z = post.sample_with(&noise.latent);
        let n = batch.len();
        let bound = self.config.action_bound;

        let targets = match fixed {
            Some(t) => t.to_vec(),
            None => self.td_targets(batch, &z, noise.next_action.clone())?,
        };

        let states = flatten(batch, |t| &t.state);
        let actions: Vec<f64> = batch.iter().flat_map(|t| t.action.iter().map(|a| a / bound)).collect();
        let rows = self.critic_rows(&states, &actions, &z)?;
        let (q1, c1) = self.critic1.forward_cached(&rows)?;
        let (q2, c2) = self.critic2.forward_cached(&rows)?;
        let inv_n = 1.0 / n as f64;
        let (mut td1, mut td2) = (0.0, 0.0);
        let mut d1 = Vec::with_capacity(n);
        let mut d2 = Vec::with_capacity(n);
        for i in 0..n {
            let e1 = q1.data()[i] - targets[i];
            let e2 = q2.data()[i] - targets[i];
            td1 += e1 * e1 * inv_n;
            td2 += e2 * e2 * inv_n;
            d1.push(2.0 * e1 * inv_n);
            d2.push(2.0 * e2 * inv_n);
        }
        let g1 = self.critic1.backward_cached(&c1, &Tensor::matrix(n, 1, d1)?)?;
        let g2 = self.critic2.backward_cached(&c2, &Tensor::matrix(n, 1, d2)?)?;

        let latent = self.config.latent_dim;
        let width = self.config.critic_input_dim();
        let z_off = width - latent;
        let mut d_z = vec![0.0; latent];
        for i in 0..n {
            for d in 0..latent {
                d_z[d] += g1.input.data()[i * width + z_off + d] + g2.input.data()[i * width + z_off + d];
            }
        }

        let beta = self.config.kl_weight;
        let kl = post.kl_to_prior();
        let mut d_mean = vec![0.0; latent];
        let mut d_var = vec![0.0; latent];
        for d in 0..latent {
            let (m, v) = (post.mean[d], post.var[d]);
            d_mean[d] = d_z[d] + beta * m;
            d_var[d] = d_z[d] * noise.latent[d] * 0.5 / v.sqrt() + beta * 0.5 * (1.0 - 1.0 / v);
        }
        let enc_out_grad = enc.backward(&d_mean, &d_var);
        let enc_grads = self.encoder.backward_cached(&enc.cache, &enc_out_grad)?;

        Ok(CriticLoss {
            loss: td1 + td2 + beta * kl,
            td1,
            td2,
            kl,
            critic1_grads: g1.params,
            critic2_grads: g2.params,
            encoder_grads: enc_grads.params,
            z,
            targets,
        })
    }

    /// One gradient update over `tasks`: critics and encoder first, then the
    /// actor against the updated critics, then target smoothing.
    pub fn train_step<R: Rng + ?Sized>(&mut self, buffers: &TaskReplayBuffers, tasks: &[usize], rng: &mut R) -> Result<TrainStats> {
        let mut g_c1 = vec![0.0; self.critic1.num_params()];
        let mut g_c2 = vec![0.0; self.critic2.num_params()];
        let mut g_enc = vec![0.0; self.encoder.num_params()];
        let mut stats = TrainStats::default();
        let mut per_task = Vec::with_capacity(tasks.len());
        for &task in tasks {
            if buffers.is_empty(task) {
                continue;
            }
            let context = buffers.recent(task, self.config.context_size)?;
            let batch = buffers.sample(task, self.config.batch_size, rng)?;
            let out = self.critic_and_encoder_loss(&batch, &context, rng)?;
            accumulate(&mut g_c1, &out.critic1_grads);
            accumulate(&mut g_c2, &out.critic2_grads);
            accumulate(&mut g_enc, &out.encoder_grads);
            stats.critic_loss += out.loss;
            stats.kl += out.kl;
            per_task.push((batch, out.z));
        }
        if per_task.is_empty() {
            return Err(Error::Empty("replay buffers"));
        }
        let k = per_task.len() as f64;
        for g in [&mut g_c1, &mut g_c2, &mut g_enc] {
            g.iter_mut().for_each(|v| *v /= k);
        }
        self.critic1_opt.step(self.critic1.params_mut(), &g_c1)?;
        self.critic2_opt.step(self.critic2.params_mut(), &g_c2)?;
        self.encoder_opt.step(self.encoder.params_mut(), &g_enc)?;

        let mut g_actor = vec![0.0; self.actor.num_params()];
        for (batch, z) in &per_task {
            let out = self.actor_loss(batch, z, rng)?;
            accumulate(&mut g_actor, &out.grads);
            stats.actor_loss += out.loss;
        }
        g_actor.iter_mut().for_each(|v| *v /= k);
        self.actor_opt.step(self.actor.params_mut(), &g_actor)?;
        self.soft_update_targets(self.config.target_coef)?;

        stats.critic_loss /= k;
        stats.actor_loss /= k;
        stats.kl /= k;
        Ok(stats)
    }

    /// Apply externally computed actor gradients (single Adam step).
    pub fn apply_actor_grads(&mut self, grads: &[f64]) -> Result<()> {
        self.actor_opt.step(self.actor.params_mut(), grads)
    }
}

fn accumulate(acc: &mut [f64], g: &[f64]) {
    for (a, b) in acc.iter_mut().zip(g) {
        *a += b;
    }
}
