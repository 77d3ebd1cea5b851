use super::{FamilyKind, TaskSpec};

/// Point robot in `[-arena, arena]^2`, one goal per corner.
///
/// Each task also owns an axis-aligned penalty square in its goal's quadrant.
/// Task ids follow quadrant order: top-left, top-right, bottom-left, bottom-right.
#[derive(Debug, Clone, PartialEq)]
pub struct FourCornersConfig {
    pub arena: f64,
    pub max_step: f64,
    pub goal_offset: f64,
    pub success_radius: f64,
    pub penalty_center: f64,
    pub penalty_half_side: f64,
    pub goal_reward: f64,
    pub step_reward: f64,
    pub penalty_reward: f64,
    pub horizon: usize,
    pub gamma: f64,
    pub exploration_steps: usize,
}

impl Default for FourCornersConfig {
    fn default() -> Self {
        Self {
            arena: 1.0,
            max_step: 0.1,
            goal_offset: 0.9,
            success_radius: 0.2,
            penalty_center: 0.5,
            penalty_half_side: 0.25,
            goal_reward: 0.0,
            step_reward: -1.0,
            penalty_reward: -3.0,
            horizon: 20,
            gamma: 0.9,
            exploration_steps: 380,
        }
    }
}

pub(crate) const QUADRANTS: [(f64, f64); 4] = [(-1.0, 1.0), (1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)];

impl FourCornersConfig {
    /// The four corner tasks; train and test splits coincide.
    pub fn tasks(&self) -> Vec<TaskSpec> {
        QUADRANTS
            .iter()
            .enumerate()
            .map(|(id, &(sx, sy))| TaskSpec {
                id,
                family: FamilyKind::FourCorners,
                params: vec![
                    sx * self.goal_offset,
                    sy * self.goal_offset,
                    sx * self.penalty_center,
                    sy * self.penalty_center,
                ],
                prior: 0.25,
            })
            .collect()
    }

    pub(crate) fn transition(&self, state: &[f64], action: &[f64]) -> Vec<f64> {
        state
            .iter()
            .zip(action)
            .map(|(s, a)| (s + a.clamp(-self.max_step, self.max_step)).clamp(-self.arena, self.arena))
            .collect()
    }

    pub(crate) fn is_success(&self, task: &TaskSpec, next_state: &[f64]) -> bool {
        let dx = next_state[0] - task.params[0];
        let dy = next_state[1] - task.params[1];
        (dx * dx + dy * dy).sqrt() < self.success_radius
    }

    pub(crate) fn in_penalty(&self, task: &TaskSpec, p: &[f64]) -> bool {
        (p[0] - task.params[2]).abs() <= self.penalty_half_side && (p[1] - task.params[3]).abs() <= self.penalty_half_side
    }

    pub(crate) fn reward_and_done(&self, task: &TaskSpec, next_state: &[f64]) -> (f64, bool) {
        if self.is_success(task, next_state) {
            (self.goal_reward, true)
        } else if self.in_penalty(task, next_state) {
            (self.penalty_reward, false)
        } else {
            (self.step_reward, false)
        }
    }
}
