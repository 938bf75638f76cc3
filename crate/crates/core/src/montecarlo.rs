//! Synthetic functional samples and Monte Carlo power studies.
//!
//! Paths follow a Gaussian AR(1) with time-varying parameters:
//! `X̃(1) = ξ(1)`, `X̃(t) = ρ(t) X̃(t−1) + ξ(t) √(1 − ρ(t)²)`, and
//! `X(t) = μ(t) + σ(t) X̃(t)`. The latent process has unit variance at every
//! t, so `X(t) ~ N(μ(t), σ(t)²)` with lag-one correlation ρ(t).

use std::fmt;

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::FunctionalSample;
use crate::error::{Error, Result};
use crate::inference::{decide_component, distributions, identity_assignment, Wanted};
use crate::measure::{draw_z, estimate_mu1, CoeffLaw, MuSpec};
use crate::permutation::{make_plans, DecisionMode, PlanConfig};
use crate::rng;

/// Per-time parameters of one group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupParams {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    /// `rho[t]` governs the transition into `t`; `rho[0]` is unused.
    pub rho: Vec<f64>,
}

impl GroupParams {
    pub fn constant(horizon: usize, mu: f64, sigma: f64, rho: f64) -> Result<Self> {
        let p = Self {
            mu: vec![mu; horizon],
            sigma: vec![sigma; horizon],
            rho: vec![rho; horizon],
        };
        p.validate()?;
        Ok(p)
    }

    pub fn horizon(&self) -> usize {
        self.mu.len()
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.mu.len();
        if t == 0 || self.sigma.len() != t || self.rho.len() != t {
            return Err(Error::InvalidParameter(
                "mu, sigma and rho must share a nonzero length".into(),
            ));
        }
        if let Some(i) = self.sigma.iter().position(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "sigma must be positive at t = {}",
                i + 1
            )));
        }
        if let Some(i) = self.rho.iter().position(|r| r.is_nan() || r.abs() >= 1.0) {
            return Err(Error::CorrelationOutOfRange {
                t: i + 1,
                value: self.rho[i],
            });
        }
        if self.mu.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidParameter("mu must be finite".into()));
        }
        Ok(())
    }
}

/// Draws `n` independent paths of the AR(1) process.
pub fn simulate_group<R: Rng + ?Sized>(params: &GroupParams, n: usize, rng: &mut R) -> Array2<f64> {
    let horizon = params.horizon();
    let mut out = Array2::zeros((n, horizon));
    for mut row in out.rows_mut() {
        let mut latent = 0.0;
        for t in 0..horizon {
            let xi: f64 = rng.sample(StandardNormal);
            latent = if t == 0 {
                xi
            } else {
                let r = params.rho[t];
                r * latent + xi * (1.0 - r * r).sqrt()
            };
            row[t] = params.mu[t] + params.sigma[t] * latent;
        }
    }
    out
}

/// Slots per simulated day.
pub const DAILY_PERIOD: usize = 48;

/// Smooth, daily-periodic control-group profile.
///
/// With `θ = 2π (slot / period)` for `slot = (t − 1) mod period`:
/// `μ = 1 + 0.6 sin θ + 0.15 cos 2θ`, `σ = 0.6 + 0.5 sin θ`,
/// `ρ = 0.4 + 0.15 sin(θ + 1)`. Spread grows with the level, as in load data,
/// and ρ stays inside `[0.25, 0.55]` so doubled correlation shifts remain valid.
pub fn synthetic_baseline(horizon: usize, period: usize) -> Result<GroupParams> {
    if horizon == 0 || period == 0 {
        return Err(Error::InvalidParameter(
            "horizon and period must be positive".into(),
        ));
    }
    let theta = |t: usize| 2.0 * std::f64::consts::PI * (t % period) as f64 / period as f64;
    let params = GroupParams {
        mu: (0..horizon)
            .map(|t| 1.0 + 0.6 * theta(t).sin() + 0.15 * (2.0 * theta(t)).cos())
            .collect(),
        sigma: (0..horizon).map(|t| 0.6 + 0.5 * theta(t).sin()).collect(),
        rho: (0..horizon)
            .map(|t| 0.4 + 0.15 * (theta(t) + 1.0).sin())
            .collect(),
    };
    params.validate()?;
    Ok(params)
}

/// Shift sizes applied by the designs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shifts {
    pub mean: f64,
    pub sd: f64,
    pub corr: f64,
}

impl Shifts {
    pub const STANDARD: Shifts = Shifts {
        mean: 0.05,
        sd: 0.05,
        corr: 0.2,
    };

    pub fn scaled(factor: f64) -> Self {
        Shifts {
            mean: Self::STANDARD.mean * factor,
            sd: Self::STANDARD.sd * factor,
            corr: Self::STANDARD.corr * factor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Effect {
    None,
    Mean,
    Sd,
    Corr,
}

fn design_effects(design_id: usize) -> Result<[Effect; 2]> {
    use Effect::*;
    Ok(match design_id {
        1 => [None, None],
        2 => [Mean, None],
        3 => [Mean, Mean],
        4 => [Mean, Sd],
        5 => [Mean, Corr],
        6 => [Sd, None],
        7 => [Sd, Sd],
        8 => [Corr, None],
        9 => [Corr, Sd],
        10 => [Corr, Corr],
        other => return Err(Error::UnknownDesign(other)),
    })
}

/// Parameters of every group (control first) under one of the ten designs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub design_id: usize,
    pub shifts: Shifts,
    pub groups: Vec<GroupParams>,
}

impl DesignSpec {
    pub fn baseline(&self) -> &GroupParams {
        &self.groups[0]
    }
}

fn shifted(base: &GroupParams, effect: Effect, shifts: &Shifts) -> Result<GroupParams> {
    let mut p = base.clone();
    match effect {
        Effect::None => {}
        Effect::Mean => p.mu.iter_mut().for_each(|m| *m += shifts.mean),
        Effect::Sd => p.sigma.iter_mut().for_each(|s| *s += shifts.sd),
        Effect::Corr => p.rho.iter_mut().for_each(|r| *r += shifts.corr),
    }
    p.validate()?;
    Ok(p)
}

/// Control plus two treatment groups under design `design_id` with the
/// standard shift sizes.
pub fn apply_design(design_id: usize, baseline: &GroupParams) -> Result<DesignSpec> {
    apply_design_with(design_id, baseline, Shifts::STANDARD)
}

pub fn apply_design_with(design_id: usize, baseline: &GroupParams, shifts: Shifts) -> Result<DesignSpec> {
    baseline.validate()?;
    let effects = design_effects(design_id)?;
    let mut groups = vec![baseline.clone()];
    for e in effects {
        groups.push(shifted(baseline, e, &shifts)?);
    }
    Ok(DesignSpec {
        design_id,
        shifts,
        groups,
    })
}

/// Simulates every group of a design; the result is labeled 0..S.
pub fn simulate_design<R: Rng + ?Sized>(
    design: &DesignSpec,
    sizes: &[usize],
    rng: &mut R,
) -> Result<FunctionalSample> {
    if sizes.len() != design.groups.len() {
        return Err(Error::InvalidParameter(format!(
            "design has {} groups but {} sizes were given",
            design.groups.len(),
            sizes.len()
        )));
    }
    let groups: Vec<Array2<f64>> = design
        .groups
        .iter()
        .zip(sizes)
        .map(|(p, &n)| simulate_group(p, n, rng))
        .collect();
    FunctionalSample::from_groups(&groups)
}

/// Local alternatives in the two-period Gaussian model: `Y ~ N(0, I₂)` and X
/// departs from Y by `n^{-1/2}` times the given shift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LocalAlternative {
    /// Period-2 mean `μ₂ / √n`.
    Mean(f64),
    /// Both standard deviations `1 + σ / √n`.
    Variance(f64),
    /// Correlation `ρ / √n`.
    Correlation(f64),
}

/// Draws `(X, Y)`, each `n × 2`.
pub fn simulate_local_pair<R: Rng + ?Sized>(
    alt: LocalAlternative,
    n: usize,
    rng: &mut R,
) -> (Array2<f64>, Array2<f64>) {
    let root_n = (n as f64).sqrt();
    let mut y = Array2::zeros((n, 2));
    y.mapv_inplace(|_: f64| rng.sample::<f64, _>(StandardNormal));
    let mut x = Array2::zeros((n, 2));
    for mut row in x.rows_mut() {
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        let (a, b) = match alt {
            LocalAlternative::Mean(mu2) => (z1, z2 + mu2 / root_n),
            LocalAlternative::Variance(s) => {
                let sd = 1.0 + s / root_n;
                (sd * z1, sd * z2)
            }
            LocalAlternative::Correlation(rho) => {
                let r = rho / root_n;
                (z1, r * z1 + (1.0 - r * r).sqrt() * z2)
            }
        };
        row[0] = a;
        row[1] = b;
    }
    (x, y)
}

/// A test evaluated in a power study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PowerTest {
    /// τ alone at the full level.
    Tau,
    /// Combined τ/ν test with the given split.
    Eta { alpha_tau: f64, alpha_nu: f64 },
    /// Energy-distance test at the full level.
    Energy,
}

impl PowerTest {
    pub fn label(&self) -> String {
        match self {
            PowerTest::Tau => "tau".into(),
            PowerTest::Eta { alpha_tau, alpha_nu } => format!("eta({alpha_tau},{alpha_nu})"),
            PowerTest::Energy => "SR".into(),
        }
    }

    /// τ, the four standard splits of η, and the energy test.
    pub fn standard_set() -> Vec<PowerTest> {
        let mut v = vec![PowerTest::Tau];
        for (a, b) in [(0.02, 0.03), (0.025, 0.025), (0.03, 0.02), (0.04, 0.01)] {
            v.push(PowerTest::Eta {
                alpha_tau: a,
                alpha_nu: b,
            });
        }
        v.push(PowerTest::Energy);
        v
    }
}

impl std::str::FromStr for PowerTest {
    type Err = Error;

    /// `tau`, `sr`/`energy`, or `eta(a,b)`.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        match t.as_str() {
            "tau" => return Ok(PowerTest::Tau),
            "sr" | "energy" => return Ok(PowerTest::Energy),
            _ => {}
        }
        let inner = t
            .strip_prefix("eta(")
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown test `{s}`")))?;
        let parts: Vec<f64> = inner
            .split([',', ':'])
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::InvalidParameter(format!("bad eta split `{s}`")))?;
        match parts.as_slice() {
            [a, b] => Ok(PowerTest::Eta {
                alpha_tau: *a,
                alpha_nu: *b,
            }),
            _ => Err(Error::InvalidParameter(format!("bad eta split `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerStudyConfig {
    pub designs: Vec<usize>,
    pub tests: Vec<PowerTest>,
    /// Total level for τ and the energy test.
    pub level: f64,
    pub reps: usize,
    pub n_perms: usize,
    pub k: usize,
    pub l: usize,
    pub coeff_law: CoeffLaw,
    /// `None` estimates μ₁ from each simulated sample.
    pub mu1: Option<f64>,
    pub sizes: Vec<usize>,
    pub horizon: usize,
    pub shift_scale: f64,
    pub decision: DecisionMode,
    pub seed: u64,
}

impl Default for PowerStudyConfig {
    /// Desk-scale profile.
    fn default() -> Self {
        Self {
            designs: (1..=10).collect(),
            tests: PowerTest::standard_set(),
            level: 0.05,
            reps: 300,
            n_perms: 200,
            k: 19,
            l: 1000,
            coeff_law: CoeffLaw::Gaussian,
            mu1: None,
            sizes: vec![20, 20, 20],
            horizon: 96,
            shift_scale: 1.0,
            decision: DecisionMode::Randomized,
            seed: 20_100_601,
        }
    }
}

impl PowerStudyConfig {
    /// Full-scale profile: 50 per group, 1440 half hours, 1000 reps,
    /// 500 permutations, L = 4000.
    pub fn full_scale() -> Self {
        Self {
            reps: 1000,
            n_perms: 500,
            l: 4000,
            sizes: vec![50, 50, 50],
            horizon: 1440,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::InvalidParameter("reps must be at least 1".into()));
        }
        if self.n_perms == 0 || self.l == 0 || self.horizon == 0 {
            return Err(Error::InvalidParameter(
                "n_perms, L and T must be positive".into(),
            ));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidParameter("level must lie in (0, 1)".into()));
        }
        if self.sizes.len() != 3 || self.sizes.contains(&0) {
            return Err(Error::InvalidParameter("need three positive group sizes".into()));
        }
        for d in &self.designs {
            design_effects(*d)?;
        }
        for t in &self.tests {
            if let PowerTest::Eta { alpha_tau, alpha_nu } = t {
                if !(*alpha_tau > 0.0 && *alpha_nu > 0.0 && alpha_tau + alpha_nu < 1.0) {
                    return Err(Error::InvalidParameter(format!("bad split {}", t.label())));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    pub test: PowerTest,
    pub design: usize,
    pub rejections: usize,
    pub reps: usize,
}

impl PowerRow {
    pub fn rate(&self) -> f64 {
        self.rejections as f64 / self.reps as f64
    }

    /// Binomial standard error of the rate.
    pub fn std_error(&self) -> f64 {
        let p = self.rate();
        (p * (1.0 - p) / self.reps as f64).sqrt()
    }
}

/// Empirical rejection probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerTable {
    pub rows: Vec<PowerRow>,
    pub config: PowerStudyConfig,
}

impl PowerTable {
    pub fn rate(&self, test: PowerTest, design: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.test == test && r.design == design)
            .map(PowerRow::rate)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("test,alpha_tau,alpha_nu,design,reps,rejections,rate,std_error\n");
        for r in &self.rows {
            let (a, b) = match r.test {
                PowerTest::Eta { alpha_tau, alpha_nu } => (alpha_tau.to_string(), alpha_nu.to_string()),
                _ => ("NA".into(), "NA".into()),
            };
            out.push_str(&format!(
                "{},{a},{b},{},{},{},{:.4},{:.4}\n",
                r.test.label(),
                r.design,
                r.reps,
                r.rejections,
                r.rate(),
                r.std_error()
            ));
        }
        out
    }
}

impl fmt::Display for PowerTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let designs = &self.config.designs;
        write!(f, "{:<22}", "test")?;
        for d in designs {
            write!(f, "{:>9}", format!("D{d}"))?;
        }
        writeln!(f)?;
        for t in &self.config.tests {
            write!(f, "{:<22}", t.label())?;
            for &d in designs {
                match self.rate(*t, d) {
                    Some(r) => write!(f, "{r:>9.3}")?,
                    None => write!(f, "{:>9}", "-")?,
                }
            }
            writeln!(f)?;
        }
        write!(
            f,
            "reps={} perms={} K={} L={} sizes={:?} T={} seed={}",
            self.config.reps,
            self.config.n_perms,
            self.config.k,
            self.config.l,
            self.config.sizes,
            self.config.horizon,
            self.config.seed
        )
    }
}

/// Rejection indicators of every test for one replication.
fn replicate(design: &DesignSpec, cfg: &PowerStudyConfig, seed: u64) -> Result<Vec<bool>> {
    let mut data_rng = rng::stream(seed, rng::domain::SIMULATION, 0);
    let sample = simulate_design(design, &cfg.sizes, &mut data_rng)?;
    let wanted = Wanted {
        tau: cfg.tests.iter().any(|t| !matches!(t, PowerTest::Energy)),
        nu: cfg.tests.iter().any(|t| matches!(t, PowerTest::Eta { .. })),
        energy: cfg.tests.contains(&PowerTest::Energy),
    };
    let mu1 = match cfg.mu1 {
        Some(m) => m,
        None => estimate_mu1(&sample)?,
    };
    let z = if wanted.tau {
        let spec =
            MuSpec::new(cfg.k, mu1, rng::derive_seed(seed, rng::domain::Z_DRAWS))?.with_law(cfg.coeff_law)?;
        Some(draw_z(&spec, sample.grid(), cfg.l)?)
    } else {
        None
    };
    let plans = make_plans(
        &identity_assignment(&sample),
        &PlanConfig::sampled(cfg.n_perms, rng::derive_seed(seed, rng::domain::PLANS)),
    )?;
    let placeholder;
    let z_ref = match &z {
        Some(z) => z,
        None => {
            placeholder = crate::measure::ZDraws::point_mass(&vec![0.0; sample.n_points()])?;
            &placeholder
        }
    };
    let d = distributions(&sample, z_ref, &plans, wanted)?;
    cfg.tests
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let stream = 2 * i as u64;
            Ok(match *t {
                PowerTest::Tau => {
                    let dist = d.tau.as_ref().expect("tau requested");
                    decide_component(dist, cfg.level, cfg.decision, seed, stream)?.rejected
                }
                PowerTest::Energy => {
                    let dist = d.energy.as_ref().expect("energy requested");
                    decide_component(dist, cfg.level, cfg.decision, seed, stream)?.rejected
                }
                PowerTest::Eta { alpha_tau, alpha_nu } => {
                    let tau = d.tau.as_ref().expect("tau requested");
                    let nu = d.nu.as_ref().expect("nu requested");
                    let a = decide_component(tau, alpha_tau, cfg.decision, seed, stream)?;
                    let b = decide_component(nu, alpha_nu, cfg.decision, seed, stream + 1)?;
                    a.rejected || b.rejected
                }
            })
        })
        .collect()
}

/// Runs every requested test on `reps` simulated datasets per design.
///
/// Replication `r` of design `d` draws all of its randomness from seeds
/// derived from `(seed, d, r)`, so the table is identical for any thread count.
pub fn run_power_study(cfg: &PowerStudyConfig) -> Result<PowerTable> {
    cfg.validate()?;
    let baseline = synthetic_baseline(cfg.horizon, DAILY_PERIOD)?;
    let shifts = Shifts::scaled(cfg.shift_scale);
    let mut rows = Vec::new();
    for &design_id in &cfg.designs {
        let design = apply_design_with(design_id, &baseline, shifts)?;
        let design_seed = rng::derive_seed(cfg.seed, design_id as u64);
        let outcomes: Vec<Vec<bool>> = (0..cfg.reps)
            .into_par_iter()
            .map(|r| {
                let rep_seed =
                    rng::derive_seed(rng::derive_seed(design_seed, rng::domain::REPLICATION), r as u64);
                replicate(&design, cfg, rep_seed)
            })
            .collect::<Result<_>>()?;
        for (i, test) in cfg.tests.iter().enumerate() {
            rows.push(PowerRow {
                test: *test,
                design: design_id,
                rejections: outcomes.iter().filter(|o| o[i]).count(),
                reps: cfg.reps,
            });
        }
    }
    Ok(PowerTable {
        rows,
        config: cfg.clone(),
    })
}
