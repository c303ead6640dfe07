//! Adaptive experiment design for partially identified causal queries.
//!
//! Kernel-based bounds on linear functionals of a structural function are
//! estimated from instrumental-variable data, and Gaussian-mixture
//! instrument policies are chosen round by round to shrink those bounds.

pub mod error;
pub mod estimator;
pub mod harness;
pub mod kernels;
pub mod numerics;
pub mod policies;
pub mod scm;
pub mod strategies;

pub use error::{Error, Result};
pub use estimator::{
    bound_coefficients, dataset_gap, evaluate_hypothesis, gap_closed_form, mmr_objective,
    oracle_bound_value, query_bounds, BoundsEstimate, Dataset, EstimatorConfig, Sign,
};
pub use kernels::{gram, gram_sym, query_vector, rbf, KernelConfig, Query};
pub use numerics::{pseudo_inverse, SymMatrix};
pub use policies::{
    fit_exploit_policy, reinforce_gradient, GmmGradient, GmmPolicy, MetaDistribution,
};
pub use scm::{NoiseMode, PolicySampler, Scenario, ScenarioKind};
pub use strategies::{
    nearest_k, run_adaptive, run_aee, run_ee, run_fixed, run_random, AdaptiveSchedule,
    Problem, RoundRecord, SortedBuffer, StrategyKind,
};
