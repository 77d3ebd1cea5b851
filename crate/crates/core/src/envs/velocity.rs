use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{FamilyKind, Split, TaskSpec};

/// Scalar velocity matching with a sparse bonus near the target.
///
/// The state is the current velocity; an action adds to it. Targets are
/// drawn uniformly from `[min_target, max_target]` with a fixed seed so the
/// task set is reproducible.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityConfig {
    pub max_delta: f64,
    pub velocity_limit: f64,
    pub success_radius: f64,
    pub min_target: f64,
    pub max_target: f64,
    pub train_tasks: usize,
    pub test_tasks: usize,
    pub task_seed: u64,
    pub horizon: usize,
    pub gamma: f64,
    pub exploration_steps: usize,
}

impl Default for VelocityConfig {
    fn default() -> Self {
        Self {
            max_delta: 0.2,
            velocity_limit: 4.0,
            success_radius: 0.3,
            min_target: 0.0,
            max_target: 3.0,
            train_tasks: 10,
            test_tasks: 5,
            task_seed: 17,
            horizon: 40,
            gamma: 0.99,
            exploration_steps: 80,
        }
    }
}

impl VelocityConfig {
    pub fn tasks(&self, split: Split) -> Vec<TaskSpec> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.task_seed);
        let total = self.train_tasks + self.test_tasks;
        let targets: Vec<f64> = (0..total).map(|_| rng.random_range(self.min_target..=self.max_target)).collect();
        let (range, n) = match split {
            Split::Train => (0..self.train_tasks, self.train_tasks),
            Split::Test => (self.train_tasks..total, self.test_tasks),
        };
        range
            .enumerate()
            .map(|(id, k)| TaskSpec {
                id,
                family: FamilyKind::Velocity1d,
                params: vec![targets[k]],
                prior: 1.0 / n as f64,
            })
            .collect()
    }

    pub(crate) fn transition(&self, state: &[f64], action: &[f64]) -> Vec<f64> {
        let dv = action[0].clamp(-self.max_delta, self.max_delta);
        vec![(state[0] + dv).clamp(-self.velocity_limit, self.velocity_limit)]
    }

    pub(crate) fn is_success(&self, task: &TaskSpec, next_state: &[f64]) -> bool {
        (next_state[0] - task.params[0]).abs() < self.success_radius
    }

    pub(crate) fn reward_and_done(&self, task: &TaskSpec, next_state: &[f64]) -> (f64, bool) {
        if self.is_success(task, next_state) {
            (1.0, false)
        } else {
            (0.0, false)
        }
    }
}
