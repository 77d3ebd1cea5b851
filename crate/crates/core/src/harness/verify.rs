use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::oracle::{
    check_conditional_optimality, check_objective_equivalence, fixtures, random_policy_draws, ConditionalInstance, TabularMdp, TabularPolicy,
    TabularTrajectory,
};
use crate::Result;

pub const EQUIVALENCE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

fn dp_agreement(mdp: &TabularMdp) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for task in 0..mdp.num_tasks() {
        let vt = mdp.value_iteration(task)?;
        for policy in [vt.greedy_policy(mdp), TabularPolicy::uniform(mdp)] {
            let enumerated: f64 = mdp.enumerate_trajectories(&policy)?.iter().map(|(t, p)| p * mdp.discounted_return(task, t)).sum();
            worst = worst.max((enumerated - mdp.policy_value(task, &policy)?).abs());
        }
        let greedy: f64 = mdp
            .enumerate_trajectories(&vt.greedy_policy(mdp))?
            .iter()
            .map(|(t, p)| p * mdp.discounted_return(task, t))
            .sum();
        worst = worst.max((greedy - vt.initial_value(mdp)).abs());
    }
    Ok(worst)
}

/// Enumeration against dynamic programming and the objective equivalence on
/// the bundled instances plus five random ones, then conditional optimality
/// on 100 random instances with 1000 perturbations each.
pub fn verify_suite(seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut instances: Vec<(String, TabularMdp)> = fixtures()?.into_iter().map(|(n, m)| (n.to_string(), m)).collect();
    for i in 0..5 {
        instances.push((format!("random-{i}"), TabularMdp::random(3, 2, 2, Some(3), 0.9, &mut rng)));
    }
    let mut checks = Vec::new();
    for (name, mdp) in &instances {
        let dp = dp_agreement(mdp)?;
        checks.push(Check {
            name: format!("{name} enumeration"),
            passed: dp < EQUIVALENCE_TOL,
            detail: format!("max |enumerated - dp| = {dp:.3e}"),
        });
        let u = |task: usize, tau: &TabularTrajectory| mdp.discounted_return(task, tau);
        let draws = random_policy_draws(mdp, 8, &mut rng);
        let r = check_objective_equivalence(mdp, &u, &draws)?;
        let offset = (r.gaps[0] - r.expected_gap).abs();
        checks.push(Check {
            name: format!("{name} objective equivalence"),
            passed: r.max_deviation < EQUIVALENCE_TOL && offset < EQUIVALENCE_TOL,
            detail: format!("deviation {:.3e}, |gap - sum p log Z| = {offset:.3e}", r.max_deviation),
        });
    }
    let (mut violations, mut worst, mut failed) = (0, f64::INFINITY, 0);
    for i in 0..100 {
        let inst = ConditionalInstance::random(2 + i % 4, 2 + i % 3, &mut rng);
        let r = check_conditional_optimality(&inst, 1000, &mut rng)?;
        violations += r.violations;
        worst = worst.min(r.min_margin);
        failed += usize::from(!r.holds());
    }
    checks.push(Check {
        name: "conditional optimality".into(),
        passed: failed == 0,
        detail: format!("100 instances x 1000 perturbations, {violations} violations, min margin {worst:.3e}"),
    });
    Ok(checks)
}
