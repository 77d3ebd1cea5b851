use rand::Rng;

use crate::envs::{TaskFamily, TaskSpec, Trajectory, Transition};
use crate::pearl::{Agent, TaskReplayBuffers};
use crate::{Error, Result};

/// Post-adaptation value of a trajectory under one task, in reward units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilityEstimate {
    pub task_id: usize,
    pub value: f64,
}

/// The two quantities the utility estimators read from an adapted policy.
///
/// Implementations adapt on `traj` relabeled under `task` before evaluating.
pub trait AdaptedValues {
    /// `Q(s1, a1, z)` for `n` draws `s1 ~ p1`, `a1 ~ pi'(.|s1)`.
    fn initial_q_values<R: Rng + ?Sized>(&self, traj: &Trajectory, task: &TaskSpec, n: usize, rng: &mut R) -> Result<Vec<f64>>;

    /// `Q(s, a, z) - (r + gamma (1 - done) V(s', z))` for every transition of `batch`.
    fn bellman_residuals<R: Rng + ?Sized>(&self, traj: &Trajectory, task: &TaskSpec, batch: &[Transition], rng: &mut R) -> Result<Vec<f64>>;
}

/// The latent actor-critic agent viewed through its task family.
#[derive(Debug, Clone, Copy)]
pub struct PearlValues<'a> {
    pub agent: &'a Agent,
    pub family: &'a TaskFamily,
}

impl AdaptedValues for PearlValues<'_> {
    fn initial_q_values<R: Rng + ?Sized>(&self, traj: &Trajectory, task: &TaskSpec, n: usize, rng: &mut R) -> Result<Vec<f64>> {
        let adapted = self.agent.adapt(self.family, traj, task, rng)?;
        let states: Vec<f64> = (0..n).flat_map(|_| self.family.initial_state(rng)).collect();
        let noise = Agent::standard_normal(rng, n * self.family.action_dim());
        let rows = self.agent.actor_rows(states.chunks(self.family.obs_dim()), &adapted.z)?;
        let sample = self.agent.sample_policy(&rows, noise)?;
        self.agent.min_q(&states, &sample.actions, &adapted.z)
    }

    fn bellman_residuals<R: Rng + ?Sized>(&self, traj: &Trajectory, task: &TaskSpec, batch: &[Transition], rng: &mut R) -> Result<Vec<f64>> {
        let adapted = self.agent.adapt(self.family, traj, task, rng)?;
        let bound = self.family.action_bound();
        let states: Vec<f64> = batch.iter().flat_map(|t| t.state.iter().copied()).collect();
        let actions: Vec<f64> = batch.iter().flat_map(|t| t.action.iter().map(|a| a / bound)).collect();
        let next: Vec<f64> = batch.iter().flat_map(|t| t.next_state.iter().copied()).collect();
        let q = self.agent.min_q(&states, &actions, &adapted.z)?;
        let noise = Agent::standard_normal(rng, batch.len() * self.family.action_dim());
        let v = self.agent.soft_value(&next, &adapted.z, noise, false)?;
        let gamma = self.agent.config.gamma;
        Ok(batch
            .iter()
            .zip(q.iter().zip(&v))
            .map(|(t, (q, v))| q - (t.reward + if t.done { 0.0 } else { gamma * v }))
            .collect())
    }
}

/// Mean initial-state Q-value of the policy adapted on `traj` under `task`.
pub fn utility_q<M: AdaptedValues, R: Rng + ?Sized>(model: &M, traj: &Trajectory, task: &TaskSpec, n_u: usize, rng: &mut R) -> Result<UtilityEstimate> {
    if n_u == 0 {
        return Err(Error::invalid("utility batch size must be at least 1"));
    }
    let q = model.initial_q_values(traj, task, n_u, rng)?;
    let value = q.iter().sum::<f64>() / q.len() as f64;
    if !value.is_finite() {
        return Err(Error::NonFinite { context: "utility" });
    }
    Ok(UtilityEstimate { task_id: task.id, value })
}

/// Negative mean squared Bellman residual on `n` transitions of the task's
/// buffer. `None` while that buffer is empty.
pub fn utility_bellman<M: AdaptedValues, R: Rng + ?Sized>(
    model: &M,
    traj: &Trajectory,
    task: &TaskSpec,
    buffers: &TaskReplayBuffers,
    n: usize,
    rng: &mut R,
) -> Result<Option<UtilityEstimate>> {
    if n == 0 {
        return Err(Error::invalid("Bellman utility batch size must be at least 1"));
    }
    if buffers.is_empty(task.id) {
        return Ok(None);
    }
    let batch = buffers.sample(task.id, n, rng)?;
    let res = model.bellman_residuals(traj, task, &batch, rng)?;
    let value = -res.iter().map(|r| r * r).sum::<f64>() / res.len() as f64;
    if !value.is_finite() {
        return Err(Error::NonFinite { context: "Bellman utility" });
    }
    Ok(Some(UtilityEstimate { task_id: task.id, value }))
}
