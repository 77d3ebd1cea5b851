//! Does the context encoder separate tasks, and do relabeled trajectories
//! embed closer to their new task than raw ones to their origin?

use rand::seq::SliceRandom;
use rand::Rng;

use crate::envs::{TaskFamily, TaskSpec, Trajectory};
use crate::nn::{Activation, Adam, AdamConfig, Head, Mlp, Tensor};
use crate::pearl::Agent;
use crate::relabel::{strategy_hfr, LogPartitionTracker, PearlValues, DEFAULT_EPSILON, DEFAULT_LOGZ_WINDOW, DEFAULT_NU};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            hidden: vec![200, 200],
            epochs: 500,
            lr: 1e-3,
            batch_size: 32,
        }
    }
}

/// Softmax classifier over `classes` labels.
#[derive(Debug, Clone)]
pub struct Classifier {
    pub net: Mlp,
}

fn softmax_rows(logits: &Tensor) -> Vec<Vec<f64>> {
    (0..logits.rows())
        .map(|i| {
            let row = logits.row(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = row.iter().map(|x| (x - max).exp()).collect();
            let s: f64 = e.iter().sum();
            e.into_iter().map(|x| x / s).collect()
        })
        .collect()
}

impl Classifier {
    pub fn new<R: Rng + ?Sized>(input: usize, classes: usize, config: &ClassifierConfig, rng: &mut R) -> Result<Self> {
        let mut widths = vec![input];
        widths.extend_from_slice(&config.hidden);
        widths.push(classes);
        Ok(Self {
            net: Mlp::new(&widths, Activation::Relu, Head::Identity, rng)?,
        })
    }

    /// Mean cross-entropy and its parameter gradient.
    pub fn loss_and_grads(&self, features: &[Vec<f64>], labels: &[usize]) -> Result<(f64, Vec<f64>)> {
        let x = Tensor::from_rows(features)?;
        let (logits, cache) = self.net.forward_cached(&x)?;
        let probs = softmax_rows(&logits);
        let n = features.len() as f64;
        let classes = self.net.output_width();
        let mut loss = 0.0;
        let mut d = Vec::with_capacity(features.len() * classes);
        for (p, &y) in probs.iter().zip(labels) {
            loss -= p[y].max(f64::MIN_POSITIVE).ln() / n;
            d.extend(p.iter().enumerate().map(|(k, pk)| (pk - if k == y { 1.0 } else { 0.0 }) / n));
        }
        let g = self.net.backward_cached(&cache, &Tensor::matrix(features.len(), classes, d)?)?;
        Ok((loss, g.params))
    }

    /// Minibatch Adam for `config.epochs` passes; returns the final epoch's mean loss.
    pub fn train<R: Rng + ?Sized>(&mut self, features: &[Vec<f64>], labels: &[usize], config: &ClassifierConfig, rng: &mut R) -> Result<f64> {
        if features.is_empty() {
            return Err(Error::Empty("classifier training set"));
        }
        let mut opt = Adam::new(self.net.num_params(), AdamConfig { lr: config.lr, ..AdamConfig::default() });
        let mut order: Vec<usize> = (0..features.len()).collect();
        let mut last = 0.0;
        for _ in 0..config.epochs {
            order.shuffle(rng);
            let mut total = 0.0;
            for chunk in order.chunks(config.batch_size.max(1)) {
                let xs: Vec<Vec<f64>> = chunk.iter().map(|&i| features[i].clone()).collect();
                let ys: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
                let (loss, grads) = self.loss_and_grads(&xs, &ys)?;
                opt.step(self.net.params_mut(), &grads)?;
                total += loss * chunk.len() as f64;
            }
            last = total / features.len() as f64;
        }
        Ok(last)
    }

    pub fn predict(&self, features: &[Vec<f64>]) -> Result<Vec<usize>> {
        if features.is_empty() {
            return Ok(Vec::new());
        }
        let logits = self.net.forward(&Tensor::from_rows(features)?)?;
        Ok((0..logits.rows())
            .map(|i| {
                let row = logits.row(i);
                (0..row.len()).fold(0, |b, k| if row[k] > row[b] { k } else { b })
            })
            .collect())
    }

    pub fn accuracy(&self, features: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
        if features.is_empty() {
            return Err(Error::Empty("classifier evaluation set"));
        }
        let pred = self.predict(features)?;
        Ok(pred.iter().zip(labels).filter(|(a, b)| a == b).count() as f64 / labels.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeConfig {
    pub classifier: ClassifierConfig,
    /// Share of trajectories used to train the classifier.
    pub train_fraction: f64,
    pub n_u: usize,
    pub epsilon: f64,
    pub logz_window: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            classifier: ClassifierConfig::default(),
            train_fraction: 0.5,
            n_u: DEFAULT_NU,
            epsilon: DEFAULT_EPSILON,
            logz_window: DEFAULT_LOGZ_WINDOW,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeReport {
    pub acc_nonrelabeled: f64,
    pub acc_relabeled: f64,
    /// Test trajectories whose relabeled task differs from their origin.
    pub moved: usize,
    pub test_size: usize,
}

/// Split, relabel the test split with the utility softmax, embed all three
/// sets with the frozen encoder, train on the raw training embeddings and
/// score both test sets.
pub fn embedding_classifier_probe<R: Rng + ?Sized>(
    agent: &Agent,
    family: &TaskFamily,
    tasks: &[TaskSpec],
    trajectories: &[Trajectory],
    config: &ProbeConfig,
    rng: &mut R,
) -> Result<ProbeReport> {
    if tasks.len() < 2 {
        return Err(Error::invalid("the classifier probe needs at least two tasks"));
    }
    let mut shuffled: Vec<&Trajectory> = trajectories.iter().collect();
    shuffled.shuffle(rng);
    let cut = ((shuffled.len() as f64) * config.train_fraction).round() as usize;
    let (train, test) = shuffled.split_at(cut.min(shuffled.len()));
    if train.is_empty() || test.is_empty() {
        return Err(Error::invalid("both probe splits need at least one trajectory"));
    }

    let values = PearlValues { agent, family };
    let mut tracker = LogPartitionTracker::new(tasks.len(), config.logz_window);
    let mut relabeled = Vec::with_capacity(test.len());
    for traj in test {
        let (task, _) = strategy_hfr(&values, traj, tasks, Some(&mut tracker), config.n_u, config.epsilon, rng)?;
        relabeled.push((traj.with_rewards_for(family, &tasks[task])?, task));
    }

    let mut embed = |traj: &Trajectory| -> Result<Vec<f64>> { Ok(agent.posterior(&traj.transitions)?.sample(rng)) };
    let mut set = |trajs: &mut dyn Iterator<Item = (&Trajectory, usize)>| -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (t, y) in trajs {
            xs.push(embed(t)?);
            ys.push(y);
        }
        Ok((xs, ys))
    };
    let (x_train, y_train) = set(&mut train.iter().map(|t| (*t, t.origin_task)))?;
    let (x_test, y_test) = set(&mut test.iter().map(|t| (*t, t.origin_task)))?;
    let (x_rel, y_rel) = set(&mut relabeled.iter().map(|(t, y)| (t, *y)))?;

    let mut clf = Classifier::new(agent.latent_dim(), tasks.len(), &config.classifier, rng)?;
    clf.train(&x_train, &y_train, &config.classifier, rng)?;
    Ok(ProbeReport {
        acc_nonrelabeled: clf.accuracy(&x_test, &y_test)?,
        acc_relabeled: clf.accuracy(&x_rel, &y_rel)?,
        moved: relabeled.iter().zip(test).filter(|((_, y), t)| *y != t.origin_task).count(),
        test_size: test.len(),
    })
}
