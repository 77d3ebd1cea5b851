#![allow(dead_code)]

use hfr_core::envs::{TaskFamily, TaskSpec, Trajectory, Transition};
use hfr_core::nn::{relative_error, Mlp, Tensor};
use rand::Rng;

/// Outcome of a central-difference gradient check.
#[derive(Debug)]
pub struct FdReport {
    pub checked: usize,
    pub skipped_kinks: usize,
    pub max_rel_err: f64,
}

/// Compare `analytic[i]` against central differences of `f` at `n` random
/// coordinates. Coordinates where the one-sided slopes disagree (a rectifier
/// kink inside the stencil) are redrawn.
pub fn fd_check<R: Rng>(
    params: &[f64],
    analytic: &[f64],
    n: usize,
    h: f64,
    rng: &mut R,
    mut f: impl FnMut(&[f64]) -> f64,
) -> FdReport {
    let mut p = params.to_vec();
    let f0 = f(&p);
    let mut report = FdReport {
        checked: 0,
        skipped_kinks: 0,
        max_rel_err: 0.0,
    };
    let mut attempts = 0;
    while report.checked < n.min(params.len()) && attempts < 20 * n {
        attempts += 1;
        let i = rng.random_range(0..params.len());
        let orig = p[i];
        p[i] = orig + h;
        let fp = f(&p);
        p[i] = orig - h;
        let fm = f(&p);
        p[i] = orig;
        let fwd = (fp - f0) / h;
        let bwd = (f0 - fm) / h;
        if relative_error(fwd, bwd, 1e-6) > 1e-3 {
            report.skipped_kinks += 1;
            continue;
        }
        let central = (fp - fm) / (2.0 * h);
        let err = relative_error(central, analytic[i], 1e-6);
        report.max_rel_err = report.max_rel_err.max(err);
        report.checked += 1;
    }
    report
}

/// Gradient check of a network under the scalar loss `sum(c * net(x))`.
pub fn fd_check_network<R: Rng>(net: &Mlp, batch: usize, coords: usize, rng: &mut R) -> FdReport {
    let x: Vec<f64> = (0..batch * net.input_width()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let x = Tensor::matrix(batch, net.input_width(), x).unwrap();
    let c: Vec<f64> = (0..batch * net.output_width()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let c = Tensor::matrix(batch, net.output_width(), c).unwrap();
    let grads = net.backward(&x, &c).unwrap();
    let mut probe = net.clone();
    fd_check(net.params(), &grads.params, coords, 1e-5, rng, |p| {
        probe.set_params(p).unwrap();
        let y = probe.forward(&x).unwrap();
        y.data().iter().zip(c.data()).map(|(a, b)| a * b).sum()
    })
}

/// A random-walk trajectory with rewards under `task`.
pub fn random_trajectory<R: Rng>(family: &TaskFamily, task: &TaskSpec, rng: &mut R) -> Trajectory {
    let bound = family.action_bound();
    let mut state = vec![0.0; family.obs_dim()];
    let mut traj = Trajectory::new(task.id);
    for _ in 0..family.horizon() {
        let action: Vec<f64> = (0..family.action_dim()).map(|_| rng.random_range(-bound..bound)).collect();
        let next = family.transition(&state, &action).unwrap();
        let (reward, done) = family.reward_and_done(task, &state, &action, &next).unwrap();
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
    traj
}

/// Four-Corners trajectory that walks diagonally from the origin into the
/// quadrant `(sx, sy)` and then hovers around the point `(0.5 sx, 0.5 sy)`.
pub fn hovering_trajectory(family: &TaskFamily, origin: &TaskSpec, sx: f64, sy: f64) -> Trajectory {
    let mut waypoints = vec![[0.0, 0.0]];
    for k in 1..=5 {
        waypoints.push([0.1 * k as f64 * sx, 0.1 * k as f64 * sy]);
    }
    let wiggle = [[0.05, 0.0], [0.0, 0.05], [-0.05, 0.0], [0.0, -0.05]];
    let mut k = 0;
    while waypoints.len() < family.horizon() + 1 {
        let last = *waypoints.last().unwrap();
        let d = wiggle[k % 4];
        waypoints.push([last[0] + d[0] * sx, last[1] + d[1] * sy]);
        k += 1;
    }
    let mut traj = Trajectory::new(origin.id);
    let mut state = vec![0.0, 0.0];
    for w in &waypoints[1..] {
        let action = vec![w[0] - state[0], w[1] - state[1]];
        let next = family.transition(&state, &action).unwrap();
        let (reward, done) = family.reward_and_done(origin, &state, &action, &next).unwrap();
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
    traj
}
