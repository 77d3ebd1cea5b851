//! Exact checks on small discrete instances and the embedding probe.
//!
//! - [`TabularMdp`]: value iteration, exhaustive trajectory enumeration and a
//!   plain-text instance format.
//! - [`check_objective_equivalence`]: the entropy-regularized objective and
//!   the reverse-KL objective differ by a policy-independent constant.
//! - [`check_conditional_optimality`]: the softmax relabeling conditional
//!   minimizes the joint KL for a fixed trajectory marginal.
//! - [`embedding_classifier_probe`]: task classification from context
//!   embeddings, raw versus relabeled.

mod derivation;
mod probe;
mod tabular;

pub use derivation::{
    check_conditional_optimality, check_objective_equivalence, log_partition, objective_pair, random_policy_draws, ConditionalInstance,
    ConditionalReport, EquivalenceReport, UtilityFn,
};
pub use probe::{embedding_classifier_probe, Classifier, ClassifierConfig, ProbeConfig, ProbeReport};
pub use tabular::{TabularMdp, TabularPolicy, TabularTrajectory, TabularValues, ValueTables, ENUMERATION_LIMIT};

/// Regression instances in the plain-text format, by name.
pub const FIXTURES: [(&str, &str); 5] = [
    ("two-state", include_str!("../../fixtures/tabular/two_state.txt")),
    ("chain", include_str!("../../fixtures/tabular/chain.txt")),
    ("grid", include_str!("../../fixtures/tabular/grid.txt")),
    ("stochastic", include_str!("../../fixtures/tabular/stochastic.txt")),
    ("three-task", include_str!("../../fixtures/tabular/three_task.txt")),
];

pub fn fixtures() -> crate::Result<Vec<(&'static str, TabularMdp)>> {
    FIXTURES.iter().map(|(name, text)| TabularMdp::from_text(text).map(|m| (*name, m))).collect()
}
