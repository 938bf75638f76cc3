//! Closed-form asymptotic local power of the τ test against mean, variance,
//! and correlation shifts in a two-period Gaussian model, next to the power
//! of the natural moment-based competitors (ν, λ, γ).
//!
//! The model: `Y ~ N(0, I₂)`, X shifted by an `n^{-1/2}` local alternative,
//! and μ a point mass at `(x1, x2)`. Each statistic, scaled by its null
//! variance, is asymptotically noncentral χ², so power is
//! `1 − F_{χ²(df, ncp)}(χ²_{df, 0.95})`.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{Error, Result};

/// Level of every analytic power curve.
pub const NOMINAL_LEVEL: f64 = 0.05;

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Central χ² CDF with `df` degrees of freedom.
pub fn chisq_cdf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x.is_infinite() {
        1.0
    } else {
        gamma_lr(df / 2.0, x / 2.0)
    }
}

fn check_df(df: f64) -> Result<()> {
    if df >= 1.0 && df.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("df must be >= 1, got {df}")))
    }
}

/// Inverse of [`chisq_cdf`] by bisection.
pub fn chisq_quantile(p: f64, df: f64) -> Result<f64> {
    check_df(df)?;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParameter(format!("p must lie in (0, 1), got {p}")));
    }
    let mut lo = 0.0;
    let mut hi = df + 10.0 * (2.0 * df).sqrt() + 10.0;
    while chisq_cdf(hi, df) < p {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if chisq_cdf(mid, df) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Noncentral χ² CDF as a Poisson(ncp/2) mixture of central χ²(df + 2j) CDFs.
///
/// Terms are added until the unvisited Poisson mass falls below 1e-12, which
/// bounds the truncation error since every CDF term is at most one.
pub fn noncentral_chisq_cdf(x: f64, df: f64, ncp: f64) -> Result<f64> {
    check_df(df)?;
    if !(ncp >= 0.0 && ncp.is_finite()) {
        return Err(Error::InvalidParameter(format!("ncp must be >= 0, got {ncp}")));
    }
    if x.is_nan() || x < 0.0 {
        return Err(Error::InvalidParameter(format!("x must be >= 0, got {x}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if ncp == 0.0 {
        return Ok(chisq_cdf(x, df));
    }
    let lambda = ncp / 2.0;
    let mut total = 0.0;
    let mut mass = 0.0;
    let mut j = 0u64;
    loop {
        let jf = j as f64;
        let weight = (-lambda + jf * lambda.ln() - ln_gamma(jf + 1.0)).exp();
        total += weight * chisq_cdf(x, df + 2.0 * jf);
        mass += weight;
        j += 1;
        if (jf > lambda && 1.0 - mass < 1e-12) || j > 100_000 {
            break;
        }
    }
    Ok(total.clamp(0.0, 1.0))
}

fn critical(df: u8) -> f64 {
    static C1: OnceLock<f64> = OnceLock::new();
    static C2: OnceLock<f64> = OnceLock::new();
    let cell = if df == 1 { &C1 } else { &C2 };
    *cell.get_or_init(|| chisq_quantile(1.0 - NOMINAL_LEVEL, f64::from(df)).expect("valid"))
}

/// 0.95 quantile of χ²₁ (≈ 3.8415).
pub fn chisq1_critical() -> f64 {
    critical(1)
}

/// 0.95 quantile of χ²₂ (≈ 5.9915).
pub fn chisq2_critical() -> f64 {
    critical(2)
}

/// Asymptotic rejection probability of a level-0.05 χ²(df) test with
/// noncentrality `ncp`.
pub fn power_from_ncp(ncp: f64, df: u8) -> f64 {
    let c = critical(df);
    1.0 - noncentral_chisq_cdf(c, f64::from(df), ncp).expect("valid arguments")
}

/// Null variance of `n^{1/2}[F̂_X − F̂_Y](x1, x2)`.
pub fn sigma2_h0(x1: f64, x2: f64) -> f64 {
    let f = normal_cdf(x1) * normal_cdf(x2);
    2.0 * f * (1.0 - f)
}

/// Noncentrality of the τ test per unit of `μ₂²` under a mean shift in period 2.
pub fn mean_shift_ncp_coefficient(x1: f64, x2: f64) -> f64 {
    let d = normal_cdf(x1) * normal_pdf(x2);
    d * d / sigma2_h0(x1, x2)
}

pub fn power_tau_mean(mu2: f64, x1: f64, x2: f64) -> f64 {
    power_from_ncp(mu2 * mu2 * mean_shift_ncp_coefficient(x1, x2), 1)
}

/// ν/2 is χ²₂ with noncentrality μ₂²/2.
pub fn power_nu_mean(mu2: f64) -> f64 {
    power_from_ncp(mu2 * mu2 / 2.0, 2)
}

/// Drift of the τ process under a variance shift of size `sigma`.
pub fn variance_shift_drift(sigma: f64, x1: f64, x2: f64) -> f64 {
    sigma * (x1 * normal_pdf(x1) * normal_cdf(x2) + x2 * normal_cdf(x1) * normal_pdf(x2))
}

pub fn power_tau_variance(sigma: f64, x1: f64, x2: f64) -> f64 {
    let d = variance_shift_drift(sigma, x1, x2);
    power_from_ncp(d * d / sigma2_h0(x1, x2), 1)
}

/// Power of the variance-comparison test λ, with noncentrality σ²/(1 + σ⁴).
pub fn power_lambda(sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    power_from_ncp(s2 / (1.0 + s2 * s2), 2)
}

pub fn power_tau_corr(rho: f64, x1: f64, x2: f64) -> f64 {
    let d = rho * normal_pdf(x1) * normal_pdf(x2);
    power_from_ncp(d * d / sigma2_h0(x1, x2), 1)
}

/// Power of the correlation-comparison test γ, noncentrality ρ²/[1 + (1 − ρ²)²].
pub fn power_gamma(rho: f64) -> f64 {
    let r2 = rho * rho;
    power_from_ncp(r2 / (1.0 + (1.0 - r2) * (1.0 - r2)), 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShiftKind {
    Mean,
    Variance,
    Correlation,
}

impl ShiftKind {
    pub fn name(&self) -> &'static str {
        match self {
            ShiftKind::Mean => "mean",
            ShiftKind::Variance => "variance",
            ShiftKind::Correlation => "correlation",
        }
    }

    /// Column name of the abscissa.
    pub fn abscissa_name(&self) -> &'static str {
        match self {
            ShiftKind::Mean => "mu2_squared",
            ShiftKind::Variance => "sigma",
            ShiftKind::Correlation => "rho",
        }
    }

    /// Default evaluation points of τ.
    pub fn default_eval_points(&self) -> Vec<(f64, f64)> {
        match self {
            ShiftKind::Mean => vec![(0.4, 0.4)],
            ShiftKind::Variance => vec![(-0.2, 0.2), (-0.4, 0.4), (-0.6, 0.6)],
            ShiftKind::Correlation => vec![(-0.1, 0.1), (-0.2, 0.2), (-0.4, 0.4)],
        }
    }

    /// Default abscissa grid.
    pub fn default_grid(&self) -> Vec<f64> {
        let (lo, hi, steps) = match self {
            ShiftKind::Mean => (0.0, 40.0, 80),
            ShiftKind::Variance => (0.0, 1.0, 50),
            ShiftKind::Correlation => (-1.0, 1.0, 80),
        };
        (0..=steps)
            .map(|i| lo + (hi - lo) * i as f64 / steps as f64)
            .collect()
    }

    pub fn competitor_name(&self) -> &'static str {
        match self {
            ShiftKind::Mean => "nu",
            ShiftKind::Variance => "lambda",
            ShiftKind::Correlation => "gamma",
        }
    }
}

/// Power of τ at several evaluation points and of the competitor, along a grid
/// of shift magnitudes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerCurve {
    pub kind: ShiftKind,
    pub abscissa: Vec<f64>,
    pub eval_points: Vec<(f64, f64)>,
    /// `tau[p][i]`: τ power at evaluation point `p`, abscissa `i`.
    pub tau: Vec<Vec<f64>>,
    pub competitor: Vec<f64>,
}

impl PowerCurve {
    pub fn compute(kind: ShiftKind, abscissa: Vec<f64>, eval_points: Vec<(f64, f64)>) -> Self {
        let tau = eval_points
            .iter()
            .map(|&(x1, x2)| {
                abscissa
                    .iter()
                    .map(|&a| match kind {
                        ShiftKind::Mean => power_tau_mean(a.max(0.0).sqrt(), x1, x2),
                        ShiftKind::Variance => power_tau_variance(a, x1, x2),
                        ShiftKind::Correlation => power_tau_corr(a, x1, x2),
                    })
                    .collect()
            })
            .collect();
        let competitor = abscissa
            .iter()
            .map(|&a| match kind {
                ShiftKind::Mean => power_nu_mean(a.max(0.0).sqrt()),
                ShiftKind::Variance => power_lambda(a),
                ShiftKind::Correlation => power_gamma(a),
            })
            .collect();
        Self {
            kind,
            abscissa,
            eval_points,
            tau,
            competitor,
        }
    }

    pub fn with_defaults(kind: ShiftKind) -> Self {
        Self::compute(kind, kind.default_grid(), kind.default_eval_points())
    }

    /// CSV with a `#` metadata line echoing the evaluation points.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let pts: Vec<String> = self
            .eval_points
            .iter()
            .map(|(a, b)| format!("({a},{b})"))
            .collect();
        out.push_str(&format!(
            "# shift={} level={} eval_points={}\n",
            self.kind.name(),
            NOMINAL_LEVEL,
            pts.join(";")
        ));
        out.push_str(self.kind.abscissa_name());
        for (a, b) in &self.eval_points {
            out.push_str(&format!(",tau_at_{a}_{b}"));
        }
        out.push_str(&format!(",{}\n", self.kind.competitor_name()));
        for (i, x) in self.abscissa.iter().enumerate() {
            out.push_str(&format!("{x}"));
            for col in &self.tau {
                out.push_str(&format!(",{:.6}", col[i]));
            }
            out.push_str(&format!(",{:.6}\n", self.competitor[i]));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_values() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!((normal_pdf(0.0) - 0.398_942_280_401_432_7).abs() < 1e-15);
        assert!((normal_cdf(0.4) - 0.6554).abs() < 5e-5);
        assert!((normal_pdf(0.4) - 0.3683).abs() < 5e-5);
        let v = normal_cdf(-1.96);
        assert!((v - 0.024_997_895_148_220_4).abs() < 1e-10, "{v:e}");
    }

    #[test]
    fn quantiles() {
        assert!((chisq_quantile(0.95, 1.0).unwrap() - 3.841_458_820_694_124).abs() < 1e-9);
        assert!((chisq_quantile(0.95, 2.0).unwrap() - 5.991_464_547_107_979).abs() < 1e-9);
        assert!(chisq_quantile(1.0, 1.0).is_err());
        assert!(chisq_quantile(0.5, 0.5).is_err());
    }

    #[test]
    fn chisq2_cdf_closed_form() {
        // χ²₂ is exponential with mean 2.
        for &x in &[0.1, 1.0, 3.0, 7.5] {
            assert!((chisq_cdf(x, 2.0) - (1.0 - (-x / 2.0f64).exp())).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_ncp_is_central() {
        for &df in &[1.0, 2.0, 5.0] {
            for &x in &[0.01, 0.5, 2.0, 9.0] {
                assert_eq!(noncentral_chisq_cdf(x, df, 0.0).unwrap(), chisq_cdf(x, df));
            }
        }
        assert!(noncentral_chisq_cdf(-1.0, 1.0, 1.0).is_err());
        assert!(noncentral_chisq_cdf(1.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn noncentral_df1_matches_normal_form() {
        // (Z + √λ)² <= x  ⇔  −√x − √λ <= Z <= √x − √λ
        for &ncp in &[0.5f64, 2.0, 8.0, 30.0] {
            for &x in &[0.2f64, 1.0, 3.84, 12.0, 50.0] {
                let d = ncp.sqrt();
                let want = normal_cdf(x.sqrt() - d) - normal_cdf(-x.sqrt() - d);
                let got = noncentral_chisq_cdf(x, 1.0, ncp).unwrap();
                assert!((got - want).abs() < 1e-10, "x={x} ncp={ncp}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn sigma2_values() {
        assert!((sigma2_h0(0.0, 0.0) - 0.375).abs() < 1e-15);
        assert!((sigma2_h0(0.4, 0.4) - 0.4901).abs() < 1e-3);
        assert!(sigma2_h0(-40.0, 0.0) < 1e-300);
    }

    #[test]
    fn mean_shift_constant() {
        assert!((mean_shift_ncp_coefficient(0.4, 0.4) - 0.119).abs() < 1e-3);
    }

    #[test]
    fn null_powers_equal_level() {
        for p in [
            power_tau_mean(0.0, 0.4, 0.4),
            power_nu_mean(0.0),
            power_tau_variance(0.0, -0.4, 0.4),
            power_tau_variance(2.0, 0.0, 0.0),
            power_lambda(0.0),
            power_tau_corr(0.0, -0.2, 0.2),
            power_gamma(0.0),
        ] {
            assert!((p - NOMINAL_LEVEL).abs() < 1e-10, "{p}");
        }
    }

    #[test]
    fn nu_beats_tau_on_mean_shifts() {
        for i in 1..=40 {
            let mu2 = 0.25 * i as f64;
            assert!(power_nu_mean(mu2) > power_tau_mean(mu2, 0.4, 0.4));
        }
    }

    #[test]
    fn correlation_power_symmetric() {
        for &r in &[0.1, 0.5, 0.9] {
            assert_eq!(power_tau_corr(r, -0.2, 0.2), power_tau_corr(-r, -0.2, 0.2));
            assert_eq!(power_gamma(r), power_gamma(-r));
        }
    }

    #[test]
    fn monotone_in_shift() {
        let grid: Vec<f64> = (0..=50).map(|i| i as f64 / 50.0).collect();
        let check = |f: &dyn Fn(f64) -> f64| {
            for w in grid.windows(2) {
                assert!(f(w[1]) >= f(w[0]) - 1e-12);
            }
        };
        check(&|a| power_tau_mean(4.0 * a, 0.4, 0.4));
        check(&|a| power_nu_mean(4.0 * a));
        check(&|a| power_tau_variance(a, -0.4, 0.4));
        check(&|a| power_lambda(a));
        check(&|a| power_tau_corr(a, -0.2, 0.2));
        check(&|a| power_gamma(a));
    }

    #[test]
    fn curve_csv_layout() {
        let c = PowerCurve::compute(ShiftKind::Mean, vec![0.0, 4.0], vec![(-0.4, 0.4)]);
        let csv = c.to_csv();
        let mut lines = csv.lines();
        assert!(lines.next().unwrap().contains("eval_points=(-0.4,0.4)"));
        assert_eq!(lines.next().unwrap(), "mu2_squared,tau_at_-0.4_0.4,nu");
        assert_eq!(lines.next().unwrap(), "0,0.050000,0.050000");
    }
}
