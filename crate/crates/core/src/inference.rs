//! End-to-end permutation testing of a sample: τ, ν, their combination η,
//! and optionally the energy comparator, all on one shared plan set.

use serde::{Deserialize, Serialize};

use crate::data::FunctionalSample;
use crate::error::{Error, Result};
use crate::measure::ZDraws;
use crate::permutation::{
    combined_p_value, combined_test, decide, make_plans, CombinedDecision, DecisionMode,
    PermutationDistribution, PermutationPlan, PlanConfig, TestResult,
};
use crate::rng;
use crate::stats::{EnergyEvaluator, NuEvaluator, TauEvaluator};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestConfig {
    pub alpha_tau: f64,
    pub alpha_nu: f64,
    pub plans: PlanConfig,
    pub decision: DecisionMode,
    /// Seed for tie-breaking draws of the randomized rule.
    pub seed: u64,
    /// Also run the energy-distance test at level `alpha_tau + alpha_nu`.
    pub energy: bool,
}

impl TestConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |a: f64| a > 0.0 && a < 1.0;
        if !ok(self.alpha_tau) || !ok(self.alpha_nu) || !ok(self.total_level()) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < alpha_tau, alpha_nu and alpha_tau + alpha_nu < 1, got ({}, {})",
                self.alpha_tau, self.alpha_nu
            )));
        }
        Ok(())
    }

    pub fn total_level(&self) -> f64 {
        self.alpha_tau + self.alpha_nu
    }
}

/// Permutation distributions of every statistic over the same plans.
#[derive(Debug, Clone)]
pub struct Distributions {
    pub tau: Option<PermutationDistribution>,
    pub nu: Option<PermutationDistribution>,
    pub energy: Option<PermutationDistribution>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Wanted {
    pub tau: bool,
    pub nu: bool,
    pub energy: bool,
}

/// Observed labels as a plan identity.
pub fn identity_assignment(sample: &FunctionalSample) -> Vec<u32> {
    sample.labels().iter().map(|&g| g as u32).collect()
}

pub fn distributions(
    sample: &FunctionalSample,
    z: &ZDraws,
    plans: &[PermutationPlan],
    wanted: Wanted,
) -> Result<Distributions> {
    let paths = sample.paths().view();
    let sizes = sample.group_sizes();
    let tau = if wanted.tau {
        let eval = TauEvaluator::new(paths, sizes, z)?;
        Some(PermutationDistribution::compute(&eval, plans)?)
    } else {
        None
    };
    let nu = if wanted.nu {
        Some(PermutationDistribution::compute(
            &NuEvaluator::new(paths, sizes)?,
            plans,
        )?)
    } else {
        None
    };
    let energy = if wanted.energy {
        Some(PermutationDistribution::compute(
            &EnergyEvaluator::new(paths, sizes)?,
            plans,
        )?)
    } else {
        None
    };
    Ok(Distributions { tau, nu, energy })
}

/// Decision for one component, with its own tie-breaking stream.
pub fn decide_component(
    dist: &PermutationDistribution,
    alpha: f64,
    mode: DecisionMode,
    seed: u64,
    component: u64,
) -> Result<TestResult> {
    let mut r = rng::stream(seed, rng::domain::DECISION, component);
    decide(dist.observed(), dist, alpha, mode, &mut r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub group_sizes: Vec<usize>,
    pub n_plans: usize,
    pub n_draws: usize,
    pub alpha_tau: f64,
    pub alpha_nu: f64,
    pub tau: TestResult,
    pub nu: TestResult,
    pub eta: CombinedDecision,
    /// Weighted-Bonferroni p-value of η.
    pub eta_p_value: f64,
    pub energy: Option<TestResult>,
}

const TAU_STREAM: u64 = 0;
const NU_STREAM: u64 = 1;
const ENERGY_STREAM: u64 = 2;

/// Runs the τ, ν, and η tests (and the energy test if requested).
pub fn run_test(sample: &FunctionalSample, z: &ZDraws, config: &TestConfig) -> Result<TestReport> {
    config.validate()?;
    if sample.n_groups() < 2 {
        return Err(Error::TooFewGroups {
            required: 2,
            found: sample.n_groups(),
        });
    }
    let plans = make_plans(&identity_assignment(sample), &config.plans)?;
    let wanted = Wanted {
        tau: true,
        nu: true,
        energy: config.energy,
    };
    let d = distributions(sample, z, &plans, wanted)?;
    let tau_d = d.tau.expect("requested");
    let nu_d = d.nu.expect("requested");
    let tau = decide_component(&tau_d, config.alpha_tau, config.decision, config.seed, TAU_STREAM)?;
    let nu = decide_component(&nu_d, config.alpha_nu, config.decision, config.seed, NU_STREAM)?;
    let energy = d
        .energy
        .map(|e| {
            decide_component(
                &e,
                config.total_level(),
                config.decision,
                config.seed,
                ENERGY_STREAM,
            )
        })
        .transpose()?;
    Ok(TestReport {
        group_sizes: sample.group_sizes().to_vec(),
        n_plans: plans.len(),
        n_draws: z.len(),
        alpha_tau: config.alpha_tau,
        alpha_nu: config.alpha_nu,
        eta: combined_test(&tau, &nu),
        eta_p_value: combined_p_value(tau.p_value, nu.p_value, config.alpha_tau, config.alpha_nu)?,
        tau,
        nu,
        energy,
    })
}
