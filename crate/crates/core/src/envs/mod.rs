//! Task families: shared dynamics, per-task reward functions.
//!
//! Every family exposes its reward as a pure function of `(task, s, a, s')`,
//! which is what makes hindsight relabeling possible: any transition can be
//! re-scored under any task.

mod four_corners;
mod trajectory;
mod velocity;

use rand::Rng;

pub use four_corners::FourCornersConfig;
pub use trajectory::{discounted_return, success, Trajectory, Transition};
pub use velocity::VelocityConfig;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyKind {
    FourCorners,
    Velocity1d,
    /// Tasks of a small discrete instance (see `oracle`).
    Tabular,
}

/// One task: reward parameters plus its prior weight.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub id: usize,
    pub family: FamilyKind,
    /// Four-Corners: `[goal_x, goal_y, penalty_cx, penalty_cy]`; Velocity: `[target]`.
    pub params: Vec<f64>,
    pub prior: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TaskFamily {
    FourCorners(FourCornersConfig),
    Velocity1d(VelocityConfig),
}

pub const FAMILY_NAMES: [&str; 2] = ["four-corners", "vel-1d"];

impl TaskFamily {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "four-corners" => Ok(TaskFamily::FourCorners(FourCornersConfig::default())),
            "vel-1d" => Ok(TaskFamily::Velocity1d(VelocityConfig::default())),
            other => Err(Error::UnknownFamily(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TaskFamily::FourCorners(_) => "four-corners",
            TaskFamily::Velocity1d(_) => "vel-1d",
        }
    }

    pub fn kind(&self) -> FamilyKind {
        match self {
            TaskFamily::FourCorners(_) => FamilyKind::FourCorners,
            TaskFamily::Velocity1d(_) => FamilyKind::Velocity1d,
        }
    }

    pub fn obs_dim(&self) -> usize {
        match self {
            TaskFamily::FourCorners(_) => 2,
            TaskFamily::Velocity1d(_) => 1,
        }
    }

    pub fn action_dim(&self) -> usize {
        self.obs_dim()
    }

    /// Per-component action bound; actions are clamped to `[-bound, bound]`.
    pub fn action_bound(&self) -> f64 {
        match self {
            TaskFamily::FourCorners(c) => c.max_step,
            TaskFamily::Velocity1d(c) => c.max_delta,
        }
    }

    pub fn horizon(&self) -> usize {
        match self {
            TaskFamily::FourCorners(c) => c.horizon,
            TaskFamily::Velocity1d(c) => c.horizon,
        }
    }

    pub fn gamma(&self) -> f64 {
        match self {
            TaskFamily::FourCorners(c) => c.gamma,
            TaskFamily::Velocity1d(c) => c.gamma,
        }
    }

    /// Exploration trajectories used before the scored rollout at meta-test time.
    pub fn exploration_trajectories(&self) -> usize {
        match self {
            TaskFamily::FourCorners(c) => c.exploration_steps / c.horizon,
            TaskFamily::Velocity1d(c) => c.exploration_steps / c.horizon,
        }
    }

    pub fn tasks(&self, split: Split) -> Vec<TaskSpec> {
        match self {
            TaskFamily::FourCorners(c) => c.tasks(),
            TaskFamily::Velocity1d(c) => c.tasks(split),
        }
    }

    pub fn task(&self, split: Split, id: usize) -> Result<TaskSpec> {
        self.tasks(split).into_iter().nth(id).ok_or(Error::UnknownTask(id))
    }

    /// Reward-model conditioning vector for a task.
    pub fn task_features(&self, task: &TaskSpec) -> Vec<f64> {
        match self {
            TaskFamily::FourCorners(_) => task.params[..2].to_vec(),
            TaskFamily::Velocity1d(_) => task.params.clone(),
        }
    }

    pub fn task_feature_dim(&self) -> usize {
        match self {
            TaskFamily::FourCorners(_) => 2,
            TaskFamily::Velocity1d(_) => 1,
        }
    }

    pub fn initial_state<R: Rng + ?Sized>(&self, _rng: &mut R) -> Vec<f64> {
        vec![0.0; self.obs_dim()]
    }

    /// Task-independent dynamics.
    pub fn transition(&self, state: &[f64], action: &[f64]) -> Result<Vec<f64>> {
        if action.len() != self.action_dim() {
            return Err(Error::DimensionMismatch {
                context: "action",
                expected: self.action_dim(),
                actual: action.len(),
            });
        }
        if action.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite { context: "action" });
        }
        match self {
            TaskFamily::FourCorners(c) => Ok(c.transition(state, action)),
            TaskFamily::Velocity1d(c) => Ok(c.transition(state, action)),
        }
    }

    /// The hindsight reward oracle: `(reward, done)` of `(s, a, s')` under any task.
    pub fn reward_and_done(&self, task: &TaskSpec, state: &[f64], action: &[f64], next_state: &[f64]) -> Result<(f64, bool)> {
        if task.family != self.kind() {
            return Err(Error::invalid(format!("task {} does not belong to {}", task.id, self.name())));
        }
        let _ = (state, action);
        match self {
            TaskFamily::FourCorners(c) => Ok(c.reward_and_done(task, next_state)),
            TaskFamily::Velocity1d(c) => Ok(c.reward_and_done(task, next_state)),
        }
    }

    pub fn is_success(&self, task: &TaskSpec, next_state: &[f64]) -> bool {
        match self {
            TaskFamily::FourCorners(c) => c.is_success(task, next_state),
            TaskFamily::Velocity1d(c) => c.is_success(task, next_state),
        }
    }
}

/// A single rollout worker's environment instance.
#[derive(Debug, Clone)]
pub struct Env {
    family: TaskFamily,
    state: Vec<f64>,
}

impl Env {
    pub fn new(family: TaskFamily) -> Self {
        let state = vec![0.0; family.obs_dim()];
        Self { family, state }
    }

    pub fn family(&self) -> &TaskFamily {
        &self.family
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Vec<f64> {
        self.state = self.family.initial_state(rng);
        self.state.clone()
    }

    /// Advance the shared dynamics. Termination is decided by the task's
    /// reward function, never here.
    pub fn step(&mut self, action: &[f64]) -> Result<Vec<f64>> {
        self.state = self.family.transition(&self.state, action)?;
        Ok(self.state.clone())
    }
}
