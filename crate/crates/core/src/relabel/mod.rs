//! Trajectory relabeling across training tasks.
//!
//! After a trajectory is collected, a strategy picks exactly one training task
//! whose buffer receives it, with rewards rewritten under that task. The
//! utility-based strategies score each candidate task by the value of the
//! policy adapted on the relabeled trajectory, subtract a per-task
//! log-partition estimate, and sample from the resulting softmax.

mod reward_model;
mod strategies;
mod utility;

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

pub use reward_model::{RewardModel, RewardModelConfig};
pub use strategies::{strategy_hfr, strategy_hfr_bellman, strategy_hipi, strategy_random};
pub use utility::{utility_bellman, utility_q, AdaptedValues, PearlValues, UtilityEstimate};

use crate::envs::{TaskFamily, TaskSpec, Trajectory};
use crate::pearl::TaskReplayBuffers;
use crate::{Error, Result};

pub const DEFAULT_NU: usize = 64;
pub const DEFAULT_EPSILON: f64 = 1.0;
pub const DEFAULT_LOGZ_WINDOW: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    None,
    Random,
    Hipi,
    Hfr,
    HfrBellman,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [Strategy::None, Strategy::Random, Strategy::Hipi, Strategy::Hfr, Strategy::HfrBellman];

    pub fn key(self) -> &'static str {
        match self {
            Strategy::None => "none",
            Strategy::Random => "random",
            Strategy::Hipi => "hipi",
            Strategy::Hfr => "hfr",
            Strategy::HfrBellman => "hfr-bellman",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|k| k.key() == s)
            .ok_or_else(|| Error::UnknownStrategy(s.to_string()))
    }
}

/// Probabilities over training tasks `0..N`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelabelDistribution {
    pub probs: Vec<f64>,
    pub epsilon: f64,
}

impl RelabelDistribution {
    pub fn one_hot(n: usize, task: usize) -> Self {
        let mut probs = vec![0.0; n];
        probs[task] = 1.0;
        Self { probs, epsilon: 1.0 }
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            probs: vec![1.0 / n as f64; n],
            epsilon: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self.probs.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>()
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.probs.iter().enumerate() {
            if *p > self.probs[best] {
                best = i;
            }
        }
        best
    }
}

/// `p_i ∝ prior_i * exp((value_i - logZ_i) / epsilon)`, max-shifted.
pub fn relabel_distribution(values: &[f64], log_partitions: &[f64], priors: &[f64], epsilon: f64) -> Result<RelabelDistribution> {
    let n = values.len();
    if n == 0 {
        return Err(Error::Empty("relabel candidates"));
    }
    for (what, len) in [("log partitions", log_partitions.len()), ("priors", priors.len())] {
        if len != n {
            return Err(Error::DimensionMismatch {
                context: what,
                expected: n,
                actual: len,
            });
        }
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::invalid(format!("temperature must be positive, got {epsilon}")));
    }
    if priors.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) || (priors.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("priors must be non-negative and sum to 1"));
    }
    let logits: Vec<f64> = values.iter().zip(log_partitions).map(|(v, z)| (v - z) / epsilon).collect();
    if logits.iter().any(|l| !l.is_finite()) {
        return Err(Error::NonFinite { context: "relabel logits" });
    }
    let shift = logits
        .iter()
        .zip(priors)
        .filter(|(_, p)| **p > 0.0)
        .map(|(l, _)| *l)
        .fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logits.iter().zip(priors).map(|(l, p)| p * (l - shift).exp()).collect();
    let total: f64 = weights.iter().sum();
    Ok(RelabelDistribution {
        probs: weights.iter().map(|w| w / total).collect(),
        epsilon,
    })
}

/// Inverse-CDF draw.
pub fn sample_task<R: Rng + ?Sized>(dist: &RelabelDistribution, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    let mut last = 0;
    for (i, p) in dist.probs.iter().enumerate() {
        if *p <= 0.0 {
            continue;
        }
        cum += p;
        last = i;
        if u < cum {
            return i;
        }
    }
    last
}

/// `log(mean(exp(v)))` computed with a max shift.
pub fn log_mean_exp(values: &[f64]) -> Option<f64> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if values.is_empty() || !max.is_finite() {
        return None;
    }
    let mean = values.iter().map(|v| (v - max).exp()).sum::<f64>() / values.len() as f64;
    Some(max + mean.ln())
}

/// Per-task window of the most recent raw values and their log-mean-exp.
#[derive(Debug, Clone)]
pub struct LogPartitionTracker {
    window: usize,
    values: Vec<VecDeque<f64>>,
    estimates: Vec<Option<f64>>,
}

impl LogPartitionTracker {
    pub fn new(tasks: usize, window: usize) -> Self {
        Self {
            window: window.max(1),
            values: vec![VecDeque::new(); tasks],
            estimates: vec![None; tasks],
        }
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn update(&mut self, task: usize, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::NonFinite { context: "log-partition input" });
        }
        let buf = self.values.get_mut(task).ok_or(Error::UnknownTask(task))?;
        if buf.len() == self.window {
            buf.pop_front();
        }
        buf.push_back(value);
        self.estimates[task] = log_mean_exp(buf.make_contiguous());
        Ok(())
    }

    pub fn estimate(&self, task: usize) -> Option<f64> {
        self.estimates.get(task).copied().flatten()
    }

    pub fn values(&self, task: usize) -> impl Iterator<Item = f64> + '_ {
        self.values.get(task).into_iter().flatten().copied()
    }
}

/// Rewrite rewards under `chosen` (true oracle, or `model` when given) and
/// append the whole trajectory to that task's buffer only.
pub fn relabel_and_store(
    buffers: &mut TaskReplayBuffers,
    family: &TaskFamily,
    traj: &Trajectory,
    chosen: &TaskSpec,
    model: Option<&RewardModel>,
) -> Result<()> {
    let relabeled = match model {
        Some(m) => m.relabel(family, traj, chosen)?,
        None => traj.with_rewards_for(family, chosen)?,
    };
    buffers.extend(chosen.id, relabeled.transitions)
}
