use rand::Rng;

use super::{Agent, GaussianPosterior};
use crate::envs::{discounted_return, success, Env, TaskFamily, TaskSpec, Trajectory, Transition};
use crate::{Error, Result};

/// The policy obtained by adapting on one trajectory: hindsight-relabel it
/// under the task, encode it, condition the actor on the sampled latent.
#[derive(Debug, Clone)]
pub struct AdaptedPolicy {
    pub relabeled: Trajectory,
    pub posterior: GaussianPosterior,
    pub z: Vec<f64>,
}

impl AdaptedPolicy {
    pub fn act<R: Rng + ?Sized>(&self, agent: &Agent, state: &[f64], deterministic: bool, rng: &mut R) -> Result<Vec<f64>> {
        agent.act(state, &self.z, deterministic, rng)
    }
}

#[derive(Debug, Clone)]
pub struct MetaTestOutcome {
    /// Exploration trajectories, in collection order; together they form the
    /// final context.
    pub exploration: Vec<Trajectory>,
    /// `K * horizon`, the configured exploration step budget.
    pub exploration_budget: usize,
    pub final_trajectory: Trajectory,
    pub final_return: f64,
    pub success: bool,
}

impl Agent {
    /// Roll `pi(.|s, z)` for up to one horizon with a fixed latent; rewards and
    /// termination come from `task`.
    pub fn collect_with_latent<R: Rng + ?Sized>(
        &self,
        family: &TaskFamily,
        task: &TaskSpec,
        z: &[f64],
        deterministic: bool,
        rng: &mut R,
    ) -> Result<Trajectory> {
        let mut env = Env::new(family.clone());
        let mut state = env.reset(rng);
        let mut traj = Trajectory::new(task.id);
        for _ in 0..family.horizon() {
            let action = self.act(&state, z, deterministic, rng)?;
            let next = env.step(&action)?;
            let (reward, done) = family.reward_and_done(task, &state, &action, &next)?;
            traj.transitions.push(Transition {
                state: std::mem::replace(&mut state, next.clone()),
                action,
                reward,
                next_state: next,
                done,
            });
            if done {
                break;
            }
        }
        Ok(traj)
    }

    /// Sample `z` from the posterior of `context` (the prior when empty) and roll it out.
    pub fn collect_trajectory<R: Rng + ?Sized>(
        &self,
        family: &TaskFamily,
        task: &TaskSpec,
        context: &[Transition],
        deterministic: bool,
        rng: &mut R,
    ) -> Result<Trajectory> {
        let z = self.posterior(context)?.sample(rng);
        self.collect_with_latent(family, task, &z, deterministic, rng)
    }

    pub fn adapt<R: Rng + ?Sized>(&self, family: &TaskFamily, traj: &Trajectory, task: &TaskSpec, rng: &mut R) -> Result<AdaptedPolicy> {
        let relabeled = traj.with_rewards_for(family, task)?;
        let posterior = self.posterior(&relabeled.transitions)?;
        let z = posterior.sample(rng);
        Ok(AdaptedPolicy { relabeled, posterior, z })
    }

    /// Posterior-sampling exploration for `k` trajectories, then one rollout of
    /// the policy conditioned on the full context.
    pub fn meta_test<R: Rng + ?Sized>(&self, family: &TaskFamily, task: &TaskSpec, k: usize, deterministic: bool, rng: &mut R) -> Result<MetaTestOutcome> {
        if k == 0 {
            return Err(Error::invalid("meta-test needs at least one exploration trajectory"));
        }
        let mut context: Vec<Transition> = Vec::with_capacity(k * family.horizon());
        let mut exploration = Vec::with_capacity(k);
        for _ in 0..k {
            let traj = self.collect_trajectory(family, task, &context, deterministic, rng)?;
            context.extend(traj.transitions.iter().cloned());
            exploration.push(traj);
        }
        let final_trajectory = self.collect_trajectory(family, task, &context, deterministic, rng)?;
        let final_return = discounted_return(family, &final_trajectory, task, family.gamma())?;
        let success = success(family, &final_trajectory, task);
        Ok(MetaTestOutcome {
            exploration,
            exploration_budget: k * family.horizon(),
            final_trajectory,
            final_return,
            success,
        })
    }
}
