use rand::Rng;

use crate::envs::{TaskFamily, TaskSpec, Trajectory, Transition};
use crate::nn::{Activation, Adam, AdamConfig, Head, Mlp, Tensor};
use crate::pearl::TaskReplayBuffers;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RewardModelConfig {
    pub hidden: Vec<usize>,
    pub lr: f64,
    /// Transitions per task per update.
    pub batch_size: usize,
}

impl Default for RewardModelConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            lr: 1e-3,
            batch_size: 128,
        }
    }
}

/// Regressor `r(task features, s, a)` used in place of the true reward when
/// relabeling.
#[derive(Debug, Clone)]
pub struct RewardModel {
    pub net: Mlp,
    config: RewardModelConfig,
    opt: Adam,
}

impl RewardModel {
    pub fn new<R: Rng + ?Sized>(family: &TaskFamily, config: RewardModelConfig, rng: &mut R) -> Result<Self> {
        let mut widths = vec![family.task_feature_dim() + family.obs_dim() + family.action_dim()];
        widths.extend_from_slice(&config.hidden);
        widths.push(1);
        let net = Mlp::new(&widths, Activation::Relu, Head::Identity, rng)?;
        let opt = Adam::new(net.num_params(), AdamConfig { lr: config.lr, ..AdamConfig::default() });
        Ok(Self { net, config, opt })
    }

    pub fn config(&self) -> &RewardModelConfig {
        &self.config
    }

    fn rows(family: &TaskFamily, task: &TaskSpec, transitions: &[Transition]) -> Result<Tensor> {
        let features = family.task_features(task);
        let bound = family.action_bound();
        let mut data = Vec::new();
        for t in transitions {
            data.extend_from_slice(&features);
            data.extend_from_slice(&t.state);
            data.extend(t.action.iter().map(|a| a / bound));
        }
        let width = features.len() + family.obs_dim() + family.action_dim();
        Tensor::matrix(transitions.len(), width, data)
    }

    pub fn predict(&self, family: &TaskFamily, task: &TaskSpec, transitions: &[Transition]) -> Result<Vec<f64>> {
        if transitions.is_empty() {
            return Ok(Vec::new());
        }
        Ok(self.net.forward(&Self::rows(family, task, transitions)?)?.into_data())
    }

    /// Copy of `traj` with predicted rewards under `task`; done flags kept.
    pub fn relabel(&self, family: &TaskFamily, traj: &Trajectory, task: &TaskSpec) -> Result<Trajectory> {
        let pred = self.predict(family, task, &traj.transitions)?;
        let mut out = traj.clone();
        for (t, r) in out.transitions.iter_mut().zip(pred) {
            t.reward = r;
        }
        Ok(out)
    }

    /// Mean squared error against stored rewards and its parameter gradient.
    pub fn loss_and_grads(&self, family: &TaskFamily, batches: &[(&TaskSpec, Vec<Transition>)]) -> Result<(f64, Vec<f64>)> {
        let total: usize = batches.iter().map(|(_, b)| b.len()).sum();
        if total == 0 {
            return Err(Error::Empty("reward model batch"));
        }
        let inv = 1.0 / total as f64;
        let mut loss = 0.0;
        let mut grads = vec![0.0; self.net.num_params()];
        for (task, batch) in batches {
            if batch.is_empty() {
                continue;
            }
            let rows = Self::rows(family, task, batch)?;
            let (out, cache) = self.net.forward_cached(&rows)?;
            let mut d = Vec::with_capacity(batch.len());
            for (pred, t) in out.data().iter().zip(batch) {
                let e = pred - t.reward;
                loss += e * e * inv;
                d.push(2.0 * e * inv);
            }
            let g = self.net.backward_cached(&cache, &Tensor::matrix(batch.len(), 1, d)?)?;
            for (a, b) in grads.iter_mut().zip(&g.params) {
                *a += b;
            }
        }
        Ok((loss, grads))
    }

    /// One Adam step on batches drawn from every non-empty task buffer, with
    /// the stored rewards as targets. Returns the pre-step loss.
    pub fn train_step<R: Rng + ?Sized>(&mut self, family: &TaskFamily, tasks: &[TaskSpec], buffers: &TaskReplayBuffers, rng: &mut R) -> Result<f64> {
        let mut batches = Vec::new();
        for task in tasks {
            if !buffers.is_empty(task.id) {
                batches.push((task, buffers.sample(task.id, self.config.batch_size, rng)?));
            }
        }
        let (loss, grads) = self.loss_and_grads(family, &batches)?;
        self.opt.step(self.net.params_mut(), &grads)?;
        Ok(loss)
    }

    /// One Adam step on a fixed batch.
    pub fn fit_batch(&mut self, family: &TaskFamily, batches: &[(&TaskSpec, Vec<Transition>)]) -> Result<f64> {
        let (loss, grads) = self.loss_and_grads(family, batches)?;
        self.opt.step(self.net.params_mut(), &grads)?;
        Ok(loss)
    }
}
