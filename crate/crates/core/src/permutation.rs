//! Group-relabeling plans, permutation critical values, the randomized
//! decision rule, p-values, and the Bonferroni combination of two tests.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::stats::PlanStatistic;

/// Default upper bound on the number of plans exhaustive mode will enumerate.
pub const DEFAULT_PLAN_CAP: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanMode {
    /// Every distinct assignment once, identity first.
    Exhaustive,
    /// Identity plus uniformly drawn relabelings, with replacement.
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecisionMode {
    /// Rejects with probability `a` when the statistic ties the critical value.
    Randomized,
    /// Never rejects on a tie.
    Conservative,
}

impl std::str::FromStr for DecisionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "randomized" => Ok(DecisionMode::Randomized),
            "conservative" => Ok(DecisionMode::Conservative),
            other => Err(Error::InvalidParameter(format!(
                "unknown decision mode `{other}`"
            ))),
        }
    }
}

impl std::fmt::Display for DecisionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DecisionMode::Randomized => "randomized",
            DecisionMode::Conservative => "conservative",
        })
    }
}

/// One assignment of the pooled units to groups. Plan 0 is the observed labeling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermutationPlan {
    pub assignment: Vec<u32>,
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanConfig {
    pub mode: PlanMode,
    /// Q̃ in sampled mode; ignored when exhaustive.
    pub n_plans: usize,
    pub seed: u64,
    pub cap: u64,
}

impl PlanConfig {
    pub fn sampled(n_plans: usize, seed: u64) -> Self {
        Self {
            mode: PlanMode::Sampled,
            n_plans,
            seed,
            cap: DEFAULT_PLAN_CAP,
        }
    }

    pub fn exhaustive() -> Self {
        Self {
            mode: PlanMode::Exhaustive,
            n_plans: 0,
            seed: 0,
            cap: DEFAULT_PLAN_CAP,
        }
    }
}

/// `N! / (n_0! ⋯ n_S!)`, or `None` on `u128` overflow.
pub fn multinomial_count(group_sizes: &[usize]) -> Option<u128> {
    let mut total: u128 = 1;
    let mut seen: u128 = 0;
    for &n in group_sizes {
        // running product of C(seen + n, n), built one factor at a time
        for k in 1..=n as u128 {
            seen += 1;
            total = total.checked_mul(seen)? / k;
        }
    }
    Some(total)
}

fn sizes_of(labels: &[u32]) -> Vec<usize> {
    let g = labels.iter().max().map_or(0, |&m| m as usize + 1);
    let mut sizes = vec![0; g];
    for &l in labels {
        sizes[l as usize] += 1;
    }
    sizes
}

/// Lexicographic successor among distinct arrangements of a multiset.
fn next_arrangement(v: &mut [u32]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Builds the plans for a test whose observed labeling is `identity`.
pub fn make_plans(identity: &[u32], config: &PlanConfig) -> Result<Vec<PermutationPlan>> {
    if identity.is_empty() {
        return Err(Error::EmptySample);
    }
    match config.mode {
        PlanMode::Exhaustive => {
            let sizes = sizes_of(identity);
            let count = multinomial_count(&sizes);
            match count {
                Some(c) if c <= config.cap as u128 => {}
                _ => {
                    return Err(Error::PlanCapExceeded {
                        count: count.map_or_else(|| "more than 2^128".to_string(), |c| c.to_string()),
                        cap: config.cap,
                    })
                }
            }
            let mut current = identity.to_vec();
            current.sort_unstable();
            let mut all = vec![current.clone()];
            while next_arrangement(&mut current) {
                all.push(current.clone());
            }
            let pos = all
                .iter()
                .position(|a| a.as_slice() == identity)
                .expect("identity is one of the arrangements");
            all.swap(0, pos);
            Ok(all
                .into_iter()
                .enumerate()
                .map(|(index, assignment)| PermutationPlan { assignment, index })
                .collect())
        }
        PlanMode::Sampled => {
            if config.n_plans == 0 {
                return Err(Error::InvalidParameter("need at least one plan".into()));
            }
            Ok((0..config.n_plans)
                .into_par_iter()
                .map(|index| {
                    let mut assignment = identity.to_vec();
                    if index > 0 {
                        let mut rng = rng::stream(config.seed, rng::domain::PLANS, index as u64);
                        assignment.shuffle(&mut rng);
                    }
                    PermutationPlan { assignment, index }
                })
                .collect())
        }
    }
}

/// Statistic values over a plan set; entry 0 belongs to the identity plan.
#[derive(Debug, Clone, PartialEq)]
pub struct PermutationDistribution {
    pub stats: Vec<f64>,
}

impl PermutationDistribution {
    pub fn new(stats: Vec<f64>) -> Result<Self> {
        if stats.is_empty() {
            return Err(Error::InvalidParameter("empty permutation distribution".into()));
        }
        Ok(Self { stats })
    }

    /// Evaluates `statistic` under every plan, in parallel. The output order
    /// follows the plan order regardless of scheduling.
    pub fn compute<S: PlanStatistic + ?Sized>(statistic: &S, plans: &[PermutationPlan]) -> Result<Self> {
        Self::new(
            plans
                .par_iter()
                .map(|p| statistic.evaluate(&p.assignment))
                .collect(),
        )
    }

    /// Observed statistic (identity plan).
    pub fn observed(&self) -> f64 {
        self.stats[0]
    }

    pub fn len(&self) -> usize {
        self.stats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stats.is_empty()
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )))
    }
}

/// `inf { t : Q⁻¹ Σ_q I(T_q <= t) >= 1 − α }`, i.e. the ⌈Q(1−α)⌉-th smallest value.
pub fn critical_value(dist: &PermutationDistribution, alpha: f64) -> f64 {
    let mut sorted = dist.stats.clone();
    sorted.sort_by(f64::total_cmp);
    let q = sorted.len();
    // Slack keeps e.g. 20 × 0.95 from rounding up to 20.
    let need = ((q as f64) * (1.0 - alpha) - 1e-9).ceil().clamp(1.0, q as f64) as usize;
    sorted[need - 1]
}

/// Outcome of one permutation test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub observed: f64,
    pub critical: f64,
    pub p_value: f64,
    /// 1, 0, or the tie probability `a`.
    pub phi: f64,
    pub rejected: bool,
    pub mode: DecisionMode,
    pub alpha: f64,
    /// Number of permuted statistics above the critical value.
    pub q_plus: usize,
    /// Number of permuted statistics equal to the critical value.
    pub q_zero: usize,
}

/// Applies the α-level permutation decision rule to `observed`.
pub fn decide<R: Rng + ?Sized>(
    observed: f64,
    dist: &PermutationDistribution,
    alpha: f64,
    mode: DecisionMode,
    rng: &mut R,
) -> Result<TestResult> {
    check_alpha(alpha)?;
    let critical = critical_value(dist, alpha);
    let q_plus = dist.stats.iter().filter(|&&t| t > critical).count();
    let q_zero = dist.stats.iter().filter(|&&t| t == critical).count();
    let q = dist.len() as f64;
    let phi = if observed > critical {
        1.0
    } else if observed == critical {
        ((q * alpha - q_plus as f64) / q_zero as f64).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let rejected = if phi == 1.0 {
        true
    } else if phi == 0.0 {
        false
    } else {
        match mode {
            // Draw only on a genuine tie so the rng stream is not consumed otherwise.
            DecisionMode::Randomized => rng.random::<f64>() < phi,
            DecisionMode::Conservative => false,
        }
    };
    Ok(TestResult {
        observed,
        critical,
        p_value: p_value(observed, dist),
        phi: if mode == DecisionMode::Conservative && phi < 1.0 {
            0.0
        } else {
            phi
        },
        rejected,
        mode,
        alpha,
        q_plus,
        q_zero,
    })
}

/// `Q⁻¹ #{q : T_q >= observed}`; at least `1/Q` because the identity is included.
pub fn p_value(observed: f64, dist: &PermutationDistribution) -> f64 {
    let count = dist.stats.iter().filter(|&&t| t >= observed).count();
    count as f64 / dist.len() as f64
}

/// Decision of the combined test η = max(φ_τ, φ_ν).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CombinedDecision {
    pub rejected: bool,
    pub tau_rejected: bool,
    pub nu_rejected: bool,
    pub p_tau: f64,
    pub p_nu: f64,
}

pub fn combined_test(tau: &TestResult, nu: &TestResult) -> CombinedDecision {
    CombinedDecision {
        rejected: tau.rejected || nu.rejected,
        tau_rejected: tau.rejected,
        nu_rejected: nu.rejected,
        p_tau: tau.p_value,
        p_nu: nu.p_value,
    }
}

/// Weighted-Bonferroni p-value of the combined test:
/// `min(1, p_τ / w_τ, p_ν / w_ν)` with `w = α / (α_τ + α_ν)`.
pub fn combined_p_value(p_tau: f64, p_nu: f64, alpha_tau: f64, alpha_nu: f64) -> Result<f64> {
    let total = alpha_tau + alpha_nu;
    let w_tau = alpha_tau / total;
    let w_nu = alpha_nu / total;
    if !(w_tau > 0.0 && w_tau < 1.0 && w_nu > 0.0 && w_nu < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "Bonferroni weights must lie in (0, 1), got ({w_tau}, {w_nu})"
        )));
    }
    Ok((p_tau / w_tau).min(p_nu / w_nu).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dist(v: &[f64]) -> PermutationDistribution {
        PermutationDistribution::new(v.to_vec()).unwrap()
    }

    fn one_to_twenty() -> PermutationDistribution {
        dist(&(1..=20).map(f64::from).collect::<Vec<_>>())
    }

    #[test]
    fn exhaustive_counts() {
        let plans = make_plans(&[0, 0, 1], &PlanConfig::exhaustive()).unwrap();
        assert_eq!(plans.len(), 3);
        assert_eq!(plans[0].assignment, vec![0, 0, 1]);
        let plans = make_plans(&[0, 1, 0, 1, 0, 1], &PlanConfig::exhaustive()).unwrap();
        assert_eq!(plans.len(), 20);
        assert_eq!(plans[0].assignment, vec![0, 1, 0, 1, 0, 1]);
        let mut seen: Vec<_> = plans.iter().map(|p| p.assignment.clone()).collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 20);
    }

    #[test]
    fn multinomial() {
        assert_eq!(multinomial_count(&[3, 3]), Some(20));
        assert_eq!(multinomial_count(&[2, 1]), Some(3));
        assert_eq!(multinomial_count(&[2, 2, 2]), Some(90));
        assert_eq!(multinomial_count(&[1, 1, 1, 1]), Some(24));
        assert_eq!(multinomial_count(&[500, 500]), None);
    }

    #[test]
    fn cap_is_enforced() {
        let labels: Vec<u32> = (0..40).map(|i| (i % 2) as u32).collect();
        let err = make_plans(&labels, &PlanConfig::exhaustive()).unwrap_err();
        assert!(matches!(err, Error::PlanCapExceeded { .. }));
    }

    #[test]
    fn sampled_plans_start_with_identity() {
        let id = [1, 0, 2, 0, 1, 2, 2];
        let plans = make_plans(&id, &PlanConfig::sampled(50, 3)).unwrap();
        assert_eq!(plans.len(), 50);
        assert_eq!(plans[0].assignment, id.to_vec());
        for p in &plans {
            let mut a = p.assignment.clone();
            a.sort();
            assert_eq!(a, vec![0, 0, 1, 1, 2, 2, 2]);
        }
        assert_eq!(plans, make_plans(&id, &PlanConfig::sampled(50, 3)).unwrap());
    }

    #[test]
    fn critical_value_examples() {
        assert_eq!(critical_value(&one_to_twenty(), 0.05), 19.0);
        assert_eq!(critical_value(&one_to_twenty(), 0.049), 20.0);
        assert_eq!(critical_value(&dist(&[3.0; 7]), 0.3), 3.0);
        let mut rev: Vec<f64> = (1..=20).rev().map(f64::from).collect();
        rev.rotate_left(5);
        assert_eq!(critical_value(&dist(&rev), 0.05), 19.0);
    }

    #[test]
    fn decide_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = decide(20.0, &one_to_twenty(), 0.05, DecisionMode::Randomized, &mut rng).unwrap();
        assert_eq!((r.critical, r.phi, r.rejected), (19.0, 1.0, true));

        let r = decide(19.0, &one_to_twenty(), 0.05, DecisionMode::Randomized, &mut rng).unwrap();
        assert_eq!((r.q_plus, r.q_zero, r.phi, r.rejected), (1, 1, 0.0, false));

        let d = dist(&[5.0; 4]);
        let r = decide(5.0, &d, 0.5, DecisionMode::Randomized, &mut rng).unwrap();
        assert_eq!((r.critical, r.q_plus, r.q_zero, r.phi), (5.0, 0, 4, 0.5));
        let hits = (0..4000)
            .filter(|_| {
                decide(5.0, &d, 0.5, DecisionMode::Randomized, &mut rng)
                    .unwrap()
                    .rejected
            })
            .count();
        assert!((1800..2200).contains(&hits), "{hits}");
        let r = decide(5.0, &d, 0.5, DecisionMode::Conservative, &mut rng).unwrap();
        assert!(!r.rejected);
        assert_eq!(r.phi, 0.0);

        assert!(decide(1.0, &d, 0.0, DecisionMode::Randomized, &mut rng).is_err());
        assert!(decide(1.0, &d, 1.0, DecisionMode::Randomized, &mut rng).is_err());
    }

    #[test]
    fn p_value_examples() {
        let mut v: Vec<f64> = (0..500).map(f64::from).collect();
        v[0] = 1000.0;
        assert_eq!(p_value(1000.0, &dist(&v)), 0.002);
        assert_eq!(
            p_value(0.0, &dist(&(0..10).map(f64::from).collect::<Vec<_>>())),
            1.0
        );
        assert_eq!(p_value(3.0, &dist(&[1.0, 2.0, 3.0, 4.0])), 0.5);
    }

    fn result(rejected: bool, p: f64) -> TestResult {
        TestResult {
            observed: 0.0,
            critical: 0.0,
            p_value: p,
            phi: if rejected { 1.0 } else { 0.0 },
            rejected,
            mode: DecisionMode::Conservative,
            alpha: 0.05,
            q_plus: 0,
            q_zero: 0,
        }
    }

    #[test]
    fn combined_examples() {
        assert!(combined_test(&result(true, 0.01), &result(false, 0.5)).rejected);
        assert!(!combined_test(&result(false, 0.5), &result(false, 0.5)).rejected);
        assert!(combined_test(&result(false, 0.5), &result(true, 0.001)).rejected);

        assert!((combined_p_value(0.016, 1.0, 0.04, 0.01).unwrap() - 0.02).abs() < 1e-15);
        assert_eq!(combined_p_value(1.0, 1.0, 0.025, 0.025).unwrap(), 1.0);
        assert!((combined_p_value(0.02, 1.0, 0.025, 0.025).unwrap() - 0.04).abs() < 1e-15);
        assert!(combined_p_value(0.1, 0.1, 0.05, 0.0).is_err());
    }
}
