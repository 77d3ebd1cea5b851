use std::collections::VecDeque;

use rand::Rng;

use crate::envs::Transition;
use crate::{Error, Result};

pub const DEFAULT_CAPACITY: usize = 1_000_000;

/// One FIFO transition store per training task.
#[derive(Debug, Clone)]
pub struct TaskReplayBuffers {
    buffers: Vec<VecDeque<Transition>>,
    capacity: usize,
}

impl TaskReplayBuffers {
    pub fn new(tasks: usize, capacity: usize) -> Self {
        Self {
            buffers: (0..tasks).map(|_| VecDeque::new()).collect(),
            capacity,
        }
    }

    pub fn num_tasks(&self) -> usize {
        self.buffers.len()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    fn buffer(&self, task: usize) -> Result<&VecDeque<Transition>> {
        self.buffers.get(task).ok_or(Error::UnknownTask(task))
    }

    pub fn len(&self, task: usize) -> usize {
        self.buffers.get(task).map_or(0, VecDeque::len)
    }

    pub fn total_len(&self) -> usize {
        self.buffers.iter().map(VecDeque::len).sum()
    }

    pub fn is_empty(&self, task: usize) -> bool {
        self.len(task) == 0
    }

    /// Append, evicting the oldest transition once at capacity.
    pub fn push(&mut self, task: usize, t: Transition) -> Result<()> {
        let cap = self.capacity;
        let buf = self.buffers.get_mut(task).ok_or(Error::UnknownTask(task))?;
        if buf.len() == cap {
            buf.pop_front();
        }
        buf.push_back(t);
        Ok(())
    }

    pub fn extend(&mut self, task: usize, ts: impl IntoIterator<Item = Transition>) -> Result<()> {
        for t in ts {
            self.push(task, t)?;
        }
        Ok(())
    }

    pub fn iter(&self, task: usize) -> Result<impl Iterator<Item = &Transition>> {
        Ok(self.buffer(task)?.iter())
    }

    /// The `n` most recent transitions, oldest first.
    pub fn recent(&self, task: usize, n: usize) -> Result<Vec<Transition>> {
        let buf = self.buffer(task)?;
        let start = buf.len().saturating_sub(n);
        Ok(buf.range(start..).cloned().collect())
    }

    /// `n` uniform draws with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, task: usize, n: usize, rng: &mut R) -> Result<Vec<Transition>> {
        let buf = self.buffer(task)?;
        if buf.is_empty() {
            return Err(Error::Empty("task replay buffer"));
        }
        Ok((0..n).map(|_| buf[rng.random_range(0..buf.len())].clone()).collect())
    }
}
