//! Permutation tests for equality of distributions of functional data.
//!
//! The τ statistic compares empirical distribution functions of the groups
//! at random functions drawn from a Gaussian measure; ν compares group means.
//! Both are calibrated by permutation, and the combined test rejects when
//! either component does.

pub mod analytic;
pub mod data;
pub mod error;
pub mod inference;
pub mod measure;
pub mod montecarlo;
pub mod permutation;
pub mod rng;
pub mod stats;

pub use data::{load_samples, write_samples, FunctionalSample, TimeGrid};
pub use error::{Error, Result};
pub use inference::{run_test, TestConfig, TestReport};
pub use measure::{draw_z, estimate_mu1, CoeffLaw, MuSpec, ZDraws};
pub use montecarlo::{run_power_study, PowerStudyConfig, PowerTable, PowerTest};
pub use permutation::{
    combined_p_value, critical_value, decide, make_plans, DecisionMode, PermutationDistribution,
    PermutationPlan, PlanConfig, PlanMode, TestResult,
};
pub use stats::{energy_statistic, nu, nu_multi, tau_hat, tau_multi, StatKind, StatisticValue};
