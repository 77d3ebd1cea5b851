use rand::Rng;

use super::utility::{utility_bellman, utility_q, AdaptedValues};
use super::{relabel_distribution, sample_task, LogPartitionTracker, RelabelDistribution};
use crate::envs::{discounted_return, TaskFamily, TaskSpec, Trajectory};
use crate::pearl::TaskReplayBuffers;
use crate::{Error, Result};

/// Feed `values` to the tracker (when normalizing), build the softmax and draw.
fn softmax_choice<R: Rng + ?Sized>(
    values: &[f64],
    tasks: &[TaskSpec],
    tracker: Option<&mut LogPartitionTracker>,
    epsilon: f64,
    rng: &mut R,
) -> Result<(usize, RelabelDistribution)> {
    let log_z = match tracker {
        Some(tracker) => {
            let mut out = Vec::with_capacity(tasks.len());
            for (task, v) in tasks.iter().zip(values) {
                tracker.update(task.id, *v)?;
                out.push(tracker.estimate(task.id).unwrap_or(0.0));
            }
            out
        }
        None => vec![0.0; tasks.len()],
    };
    let priors: Vec<f64> = tasks.iter().map(|t| t.prior).collect();
    let dist = relabel_distribution(values, &log_z, &priors, epsilon)?;
    let idx = sample_task(&dist, rng);
    Ok((tasks[idx].id, dist))
}

fn check_tasks(tasks: &[TaskSpec]) -> Result<()> {
    if tasks.is_empty() {
        return Err(Error::Empty("training tasks"));
    }
    Ok(())
}

/// Softmax over post-adaptation utilities. `tracker = None` drops the
/// log-partition normalization.
pub fn strategy_hfr<M: AdaptedValues, R: Rng + ?Sized>(
    model: &M,
    traj: &Trajectory,
    tasks: &[TaskSpec],
    tracker: Option<&mut LogPartitionTracker>,
    n_u: usize,
    epsilon: f64,
    rng: &mut R,
) -> Result<(usize, RelabelDistribution)> {
    check_tasks(tasks)?;
    let mut values = Vec::with_capacity(tasks.len());
    for task in tasks {
        values.push(utility_q(model, traj, task, n_u, rng)?.value);
    }
    softmax_choice(&values, tasks, tracker, epsilon, rng)
}

/// Like [`strategy_hfr`] with the negative Bellman error as utility. While
/// any candidate buffer is still empty every task is scored by `utility_q`.
#[allow(clippy::too_many_arguments)]
pub fn strategy_hfr_bellman<M: AdaptedValues, R: Rng + ?Sized>(
    model: &M,
    traj: &Trajectory,
    tasks: &[TaskSpec],
    buffers: &TaskReplayBuffers,
    tracker: Option<&mut LogPartitionTracker>,
    n: usize,
    epsilon: f64,
    rng: &mut R,
) -> Result<(usize, RelabelDistribution)> {
    check_tasks(tasks)?;
    let mut values = Vec::with_capacity(tasks.len());
    for task in tasks {
        match utility_bellman(model, traj, task, buffers, n, rng)? {
            Some(u) => values.push(u.value),
            None => {
                values.clear();
                break;
            }
        }
    }
    if values.is_empty() {
        return strategy_hfr(model, traj, tasks, tracker, n, epsilon, rng);
    }
    softmax_choice(&values, tasks, tracker, epsilon, rng)
}

/// Softmax over the trajectory's own discounted return under each task.
pub fn strategy_hipi<R: Rng + ?Sized>(
    family: &TaskFamily,
    traj: &Trajectory,
    tasks: &[TaskSpec],
    tracker: Option<&mut LogPartitionTracker>,
    epsilon: f64,
    rng: &mut R,
) -> Result<(usize, RelabelDistribution)> {
    check_tasks(tasks)?;
    let values = tasks
        .iter()
        .map(|t| discounted_return(family, traj, t, family.gamma()))
        .collect::<Result<Vec<_>>>()?;
    softmax_choice(&values, tasks, tracker, epsilon, rng)
}

pub fn strategy_random<R: Rng + ?Sized>(task_count: usize, rng: &mut R) -> Result<usize> {
    if task_count == 0 {
        return Err(Error::Empty("training tasks"));
    }
    Ok(rng.random_range(0..task_count))
}
