use std::fmt::Write as _;

use super::{TaskFamily, TaskSpec};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

/// An episode plus the task it was collected for.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub transitions: Vec<Transition>,
    pub origin_task: usize,
}

impl Trajectory {
    pub fn new(origin_task: usize) -> Self {
        Self {
            transitions: Vec::new(),
            origin_task,
        }
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn rewards(&self) -> impl Iterator<Item = f64> + '_ {
        self.transitions.iter().map(|t| t.reward)
    }

    /// Hindsight copy: every reward recomputed under `task`, everything else
    /// (states, actions, next states, done flags) kept bit-for-bit.
    pub fn with_rewards_for(&self, family: &TaskFamily, task: &TaskSpec) -> Result<Trajectory> {
        let mut out = self.clone();
        for t in &mut out.transitions {
            t.reward = family.reward_and_done(task, &t.state, &t.action, &t.next_state)?.0;
        }
        Ok(out)
    }

    /// Checks the chaining and termination invariants.
    pub fn validate(&self) -> Result<()> {
        for (i, pair) in self.transitions.windows(2).enumerate() {
            if pair[0].next_state != pair[1].state {
                return Err(Error::invalid(format!("transition {i} does not chain into {}", i + 1)));
            }
            if pair[0].done {
                return Err(Error::invalid(format!("done set before the final transition (step {i})")));
            }
        }
        if self.transitions.iter().any(|t| !t.reward.is_finite()) {
            return Err(Error::NonFinite { context: "trajectory reward" });
        }
        Ok(())
    }

    /// One transition per line: `state..., action..., reward, next_state..., done`
    /// with `done` written as 0 or 1.
    pub fn to_dump(&self) -> String {
        let mut s = String::new();
        for t in &self.transitions {
            let fields = t
                .state
                .iter()
                .chain(&t.action)
                .chain(std::iter::once(&t.reward))
                .chain(&t.next_state)
                .map(|v| format!("{v:?}"))
                .chain(std::iter::once(if t.done { "1".to_string() } else { "0".to_string() }))
                .collect::<Vec<_>>();
            let _ = writeln!(s, "{}", fields.join(","));
        }
        s
    }

    pub fn from_dump(text: &str, obs_dim: usize, action_dim: usize, origin_task: usize) -> Result<Trajectory> {
        let width = 2 * obs_dim + action_dim + 2;
        let mut traj = Trajectory::new(origin_task);
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let vals = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse {
                    what: "trajectory dump",
                    line: i + 1,
                    reason: e.to_string(),
                })?;
            if vals.len() != width {
                return Err(Error::Parse {
                    what: "trajectory dump",
                    line: i + 1,
                    reason: format!("expected {width} fields, got {}", vals.len()),
                });
            }
            let (state, rest) = vals.split_at(obs_dim);
            let (action, rest) = rest.split_at(action_dim);
            let reward = rest[0];
            let next_state = &rest[1..1 + obs_dim];
            traj.transitions.push(Transition {
                state: state.to_vec(),
                action: action.to_vec(),
                reward,
                next_state: next_state.to_vec(),
                done: rest[1 + obs_dim] != 0.0,
            });
        }
        Ok(traj)
    }
}

/// `sum_t gamma^t r_task(s_t, a_t, s_{t+1})` with rewards recomputed under `task`.
pub fn discounted_return(family: &TaskFamily, traj: &Trajectory, task: &TaskSpec, gamma: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::invalid(format!("discount must lie in [0, 1), got {gamma}")));
    }
    let mut total = 0.0;
    let mut discount = 1.0;
    for t in &traj.transitions {
        let (r, _) = family.reward_and_done(task, &t.state, &t.action, &t.next_state)?;
        total += discount * r;
        discount *= gamma;
    }
    Ok(total)
}

/// True iff some visited next state satisfies the task's success predicate.
pub fn success(family: &TaskFamily, traj: &Trajectory, task: &TaskSpec) -> bool {
    traj.transitions.iter().any(|t| family.is_success(task, &t.next_state))
}
