//! Brute-force checks of the relabeling derivation on small instances.

use rand::Rng;

use super::tabular::{TabularMdp, TabularPolicy, TabularTrajectory};
use crate::relabel::relabel_distribution;
use crate::{Error, Result};

/// Trajectory utility `U_task(tau)`.
pub type UtilityFn<'a> = dyn Fn(usize, &TabularTrajectory) -> f64 + 'a;

#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceReport {
    /// `A(q) - B(q)` per policy draw.
    pub gaps: Vec<f64>,
    /// `max |gap_i - gap_0|`.
    pub max_deviation: f64,
    /// `sum_task p(task) log Z(task)`, the value every gap should equal.
    pub expected_gap: f64,
}

fn log_sum_exp(xs: impl Iterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.collect();
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `log Z(task) = log sum_tau p1 prod p(s'|s,a) exp(U(tau))` over every
/// action sequence, by enumeration under the uniform policy.
pub fn log_partition(mdp: &TabularMdp, task: usize, utility: &UtilityFn) -> Result<f64> {
    let t = mdp.horizon.ok_or_else(|| Error::invalid("partition function needs a finite horizon"))?;
    let uniform = TabularPolicy::uniform(mdp);
    let trajs = mdp.enumerate_trajectories(&uniform)?;
    let lse = log_sum_exp(trajs.iter().map(|(tau, p)| p.ln() + utility(task, tau)));
    Ok(lse + t as f64 * (mdp.actions as f64).ln())
}

/// Entropy-regularized objective `A(q)` and reverse KL form `B(q) = -KL(q || p)`
/// for per-task policies `policies[task]`, with `q(task) = p(task)`.
pub fn objective_pair(mdp: &TabularMdp, utility: &UtilityFn, policies: &[TabularPolicy], log_z: &[f64]) -> Result<(f64, f64)> {
    if policies.len() != mdp.num_tasks() || log_z.len() != mdp.num_tasks() {
        return Err(Error::DimensionMismatch {
            context: "per-task policies",
            expected: mdp.num_tasks(),
            actual: policies.len().min(log_z.len()),
        });
    }
    let (mut a_obj, mut b_obj) = (0.0, 0.0);
    for (task, policy) in policies.iter().enumerate() {
        let prior = mdp.priors[task];
        if prior == 0.0 {
            continue;
        }
        let mut expected_u = 0.0;
        let mut entropy = 0.0;
        let mut kl = 0.0;
        for (tau, q) in mdp.enumerate_trajectories(policy)? {
            let u = utility(task, &tau);
            let log_pi = policy.log_prob(mdp, &tau);
            let dynamics = mdp.log_dynamics(&tau);
            let log_q = dynamics + log_pi;
            let log_p = dynamics + u - log_z[task];
            expected_u += q * u;
            entropy -= q * log_pi;
            kl += q * (log_q - log_p);
        }
        a_obj += prior * (expected_u + entropy);
        b_obj -= prior * kl;
    }
    Ok((a_obj, b_obj))
}

/// Evaluate `A - B` for each draw of per-task policies; it must not depend on
/// the draw.
pub fn check_objective_equivalence(mdp: &TabularMdp, utility: &UtilityFn, draws: &[Vec<TabularPolicy>]) -> Result<EquivalenceReport> {
    mdp.validate()?;
    if draws.is_empty() {
        return Err(Error::Empty("policy draws"));
    }
    let log_z = (0..mdp.num_tasks()).map(|k| log_partition(mdp, k, utility)).collect::<Result<Vec<_>>>()?;
    let gaps = draws
        .iter()
        .map(|d| objective_pair(mdp, utility, d, &log_z).map(|(a, b)| a - b))
        .collect::<Result<Vec<_>>>()?;
    let max_deviation = gaps.iter().map(|g| (g - gaps[0]).abs()).fold(0.0, f64::max);
    let expected_gap = mdp.priors.iter().zip(&log_z).map(|(p, z)| p * z).sum();
    Ok(EquivalenceReport {
        gaps,
        max_deviation,
        expected_gap,
    })
}

/// `stochastic` Dirichlet policy draws per task followed by one deterministic draw.
pub fn random_policy_draws<R: Rng + ?Sized>(mdp: &TabularMdp, stochastic: usize, rng: &mut R) -> Vec<Vec<TabularPolicy>> {
    let tasks = mdp.num_tasks();
    let mut draws: Vec<Vec<TabularPolicy>> = (0..stochastic).map(|_| (0..tasks).map(|_| TabularPolicy::random(mdp, rng)).collect()).collect();
    draws.push((0..tasks).map(|_| TabularPolicy::random_deterministic(mdp, rng)).collect());
    draws
}

/// Trajectory weights, utilities `[traj][task]`, per-task log-partitions and
/// priors: the ingredients of the joint KL over `(tau, task)` with the
/// trajectory marginal held fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalInstance {
    pub traj_weights: Vec<f64>,
    pub utilities: Vec<Vec<f64>>,
    pub log_partitions: Vec<f64>,
    pub prior: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalReport {
    /// The softmax conditional, one row per trajectory.
    pub optimal: Vec<Vec<f64>>,
    pub optimal_objective: f64,
    /// Smallest `J(perturbed) - J(optimal)` over non-degenerate perturbations
    /// (`+inf` when there were none).
    pub min_margin: f64,
    pub violations: usize,
    pub trials: usize,
}

impl ConditionalReport {
    pub fn holds(&self) -> bool {
        self.violations == 0 && self.min_margin > 0.0
    }
}

impl ConditionalInstance {
    pub fn random<R: Rng + ?Sized>(trajs: usize, tasks: usize, rng: &mut R) -> Self {
        let mut dirichlet = |n: usize| {
            let w: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
            let s: f64 = w.iter().sum();
            w.into_iter().map(|x| x / s).collect::<Vec<_>>()
        };
        let traj_weights = dirichlet(trajs);
        let prior = dirichlet(tasks);
        Self {
            traj_weights,
            prior,
            utilities: (0..trajs).map(|_| (0..tasks).map(|_| rng.random_range(-10.0..=10.0)).collect()).collect(),
            log_partitions: (0..tasks).map(|_| rng.random_range(-5.0..=5.0)).collect(),
        }
    }

    pub fn tasks(&self) -> usize {
        self.prior.len()
    }

    /// `J(c) = sum_tau w(tau) sum_task c [log c - log p(task) + log Z(task) - U]`,
    /// the joint KL up to terms independent of `c`.
    pub fn objective(&self, conditional: &[Vec<f64>]) -> f64 {
        let mut j = 0.0;
        for ((w, row), u) in self.traj_weights.iter().zip(conditional).zip(&self.utilities) {
            for (k, c) in row.iter().enumerate() {
                if *c > 0.0 {
                    j += w * c * (c.ln() - self.prior[k].ln() + self.log_partitions[k] - u[k]);
                }
            }
        }
        j
    }

    pub fn optimal_conditional(&self) -> Result<Vec<Vec<f64>>> {
        self.utilities
            .iter()
            .map(|u| relabel_distribution(u, &self.log_partitions, &self.prior, 1.0).map(|d| d.probs))
            .collect()
    }
}

/// Compare the softmax conditional against `trials` perturbed conditionals:
/// alternately a fresh Dirichlet(1) draw per trajectory and a multiplicative
/// log-normal perturbation of the optimum.
pub fn check_conditional_optimality<R: Rng + ?Sized>(inst: &ConditionalInstance, trials: usize, rng: &mut R) -> Result<ConditionalReport> {
    let optimal = inst.optimal_conditional()?;
    let j_opt = inst.objective(&optimal);
    let tasks = inst.tasks();
    let mut min_margin = f64::INFINITY;
    let mut violations = 0;
    for trial in 0..trials {
        let scale = 10f64.powf(rng.random_range(-1.5..0.5));
        let perturbed: Vec<Vec<f64>> = optimal
            .iter()
            .map(|row| {
                let w: Vec<f64> = if trial % 2 == 0 {
                    (0..tasks).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect()
                } else {
                    row.iter().map(|c| c * (scale * rng.random_range(-1.0..1.0)).exp()).collect()
                };
                let s: f64 = w.iter().sum();
                w.into_iter().map(|x| x / s).collect()
            })
            .collect();
        let tv: f64 = optimal
            .iter()
            .zip(&perturbed)
            .zip(&inst.traj_weights)
            .map(|((a, b), w)| w * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>())
            .sum();
        let margin = inst.objective(&perturbed) - j_opt;
        if margin < -1e-12 {
            violations += 1;
        }
        if tv > 1e-9 {
            min_margin = min_margin.min(margin);
        }
    }
    Ok(ConditionalReport {
        optimal,
        optimal_objective: j_opt,
        min_margin,
        violations,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_two_task_instance() {
        let inst = ConditionalInstance {
            traj_weights: vec![1.0],
            utilities: vec![vec![0.0, 3f64.ln()]],
            log_partitions: vec![0.0, 0.0],
            prior: vec![0.5, 0.5],
        };
        let opt = inst.optimal_conditional().unwrap();
        assert!((opt[0][0] - 0.25).abs() < 1e-15 && (opt[0][1] - 0.75).abs() < 1e-15);
        // J(c) = sum c log c + log 2 - 0.75 ln 3 at the optimum equals -log 2.
        let j_opt = inst.objective(&opt);
        assert!((j_opt + 2f64.ln()).abs() < 1e-12);
        let j_half = inst.objective(&[vec![0.5, 0.5]]);
        assert!((j_half - (-0.5 * 3f64.ln())).abs() < 1e-12);
        assert!(j_half > j_opt);
    }

    #[test]
    fn single_task_has_no_strict_improvement() {
        let inst = ConditionalInstance {
            traj_weights: vec![0.5, 0.5],
            utilities: vec![vec![1.0], vec![-2.0]],
            log_partitions: vec![0.3],
            prior: vec![1.0],
        };
        let mut rng = rand::rng();
        let report = check_conditional_optimality(&inst, 20, &mut rng).unwrap();
        assert_eq!(report.violations, 0);
        assert_eq!(report.min_margin, f64::INFINITY);
    }
}
