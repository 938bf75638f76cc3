//! The weighting measure over function space, realized as random truncated
//! trigonometric expansions
//!
//! ```text
//! Z(t) = b_1 + Σ_j √2 b_{2j} cos[jπ(2t−T)/T] + Σ_j √2 b_{2j+1} sin[jπ(2t−T)/T]
//! ```
//!
//! with independent coefficients, `E b_1 = μ₁`, `E b_k = 0` for `k > 1` and a
//! common standard deviation (default `1/√K`).

use ndarray::{Array2, ArrayView1};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{FunctionalSample, TimeGrid};
use crate::error::{Error, Result};
use crate::rng;

/// Law of the standardized coefficient noise. Every variant has mean 0 and
/// variance 1 before scaling by `coeff_sd`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoeffLaw {
    Gaussian,
    /// Uniform on `[−√3, √3]`.
    Uniform,
    /// Student-t rescaled to unit variance; needs `df > 2`.
    StudentT(f64),
}

impl CoeffLaw {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            CoeffLaw::Gaussian => rng.sample(StandardNormal),
            CoeffLaw::Uniform => {
                let half = 3f64.sqrt();
                rng.random_range(-half..half)
            }
            CoeffLaw::StudentT(df) => {
                let t = StudentT::new(df).expect("df validated by MuSpec");
                t.sample(rng) / (df / (df - 2.0)).sqrt()
            }
        }
    }
}

impl std::str::FromStr for CoeffLaw {
    type Err = Error;

    /// Accepts `gaussian`, `uniform`, or `student-t(<df>)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "gaussian" | "normal" => Ok(CoeffLaw::Gaussian),
            "uniform" | "uniform-scaled" => Ok(CoeffLaw::Uniform),
            _ => {
                let df = s
                    .strip_prefix("student-t(")
                    .or_else(|| s.strip_prefix("t("))
                    .and_then(|r| r.strip_suffix(')'))
                    .and_then(|d| d.trim().parse::<f64>().ok())
                    .ok_or_else(|| Error::InvalidParameter(format!("unknown coefficient law `{s}`")))?;
                Ok(CoeffLaw::StudentT(df))
            }
        }
    }
}

impl std::fmt::Display for CoeffLaw {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CoeffLaw::Gaussian => write!(f, "gaussian"),
            CoeffLaw::Uniform => write!(f, "uniform"),
            CoeffLaw::StudentT(df) => write!(f, "student-t({df})"),
        }
    }
}

/// Specification of the measure μ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuSpec {
    /// Truncation order, odd.
    pub k: usize,
    /// Mean of the constant coefficient `b_1`.
    pub mu1: f64,
    pub coeff_sd: f64,
    pub coeff_law: CoeffLaw,
    pub seed: u64,
}

impl MuSpec {
    /// Gaussian coefficients with `Var(b_k) = 1/K`.
    pub fn new(k: usize, mu1: f64, seed: u64) -> Result<Self> {
        let spec = Self {
            k,
            mu1,
            coeff_sd: 1.0 / (k as f64).sqrt(),
            coeff_law: CoeffLaw::Gaussian,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_law(mut self, law: CoeffLaw) -> Result<Self> {
        self.coeff_law = law;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k % 2 == 0 {
            return Err(Error::InvalidParameter(format!(
                "K must be odd and >= 1, got {}",
                self.k
            )));
        }
        if !(self.coeff_sd.is_finite() && self.coeff_sd > 0.0) {
            return Err(Error::InvalidParameter("coefficient sd must be positive".into()));
        }
        if !self.mu1.is_finite() {
            return Err(Error::InvalidParameter("mu1 must be finite".into()));
        }
        if let CoeffLaw::StudentT(df) = self.coeff_law {
            if df.is_nan() || df <= 2.0 {
                return Err(Error::InvalidParameter(format!(
                    "student-t coefficients need df > 2 for unit variance, got {df}"
                )));
            }
        }
        Ok(())
    }

    /// `E b_k`.
    pub fn coeff_mean(&self, k: usize) -> f64 {
        if k == 1 {
            self.mu1
        } else {
            0.0
        }
    }
}

/// Where a set of draws came from.
#[derive(Debug, Clone, PartialEq)]
pub enum ZSource {
    Basis(MuSpec),
    Explicit,
}

/// L realized functions evaluated on the grid, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct ZDraws {
    values: Array2<f64>,
    source: ZSource,
}

impl ZDraws {
    /// Wraps explicitly chosen evaluation points, e.g. a finitely supported μ.
    pub fn from_matrix(values: Array2<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::InvalidParameter(
                "need at least one draw and one grid point".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("draws must be finite".into()));
        }
        Ok(Self {
            values,
            source: ZSource::Explicit,
        })
    }

    /// μ putting all its mass on `z`.
    pub fn point_mass(z: &[f64]) -> Result<Self> {
        Self::from_matrix(Array2::from_shape_vec((1, z.len()), z.to_vec()).expect("1×J"))
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn source(&self) -> &ZSource {
        &self.source
    }

    /// Number of draws L.
    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn n_points(&self) -> usize {
        self.values.ncols()
    }

    pub fn row(&self, l: usize) -> ArrayView1<'_, f64> {
        self.values.row(l)
    }
}

/// Trigonometric basis element `ψ_k` at grid index `t` of horizon `T`.
pub fn trig_basis(k: usize, t: usize, horizon: usize) -> f64 {
    assert!(k >= 1, "basis index starts at 1");
    if k == 1 {
        return 1.0;
    }
    let j = (k / 2) as f64;
    let arg = j * std::f64::consts::PI * (2.0 * t as f64 - horizon as f64) / horizon as f64;
    if k % 2 == 0 {
        std::f64::consts::SQRT_2 * arg.cos()
    } else {
        std::f64::consts::SQRT_2 * arg.sin()
    }
}

/// Median over units of each unit's maximum over time.
pub fn estimate_mu1(sample: &FunctionalSample) -> Result<f64> {
    let mut maxima: Vec<f64> = sample
        .paths()
        .rows()
        .into_iter()
        .map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    median(&mut maxima).ok_or(Error::EmptySample)
}

fn median(xs: &mut [f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    Some(if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    })
}

/// `K × J` table of `ψ_k(t)`.
pub fn basis_matrix(k: usize, grid: &TimeGrid) -> Array2<f64> {
    let horizon = grid.horizon();
    Array2::from_shape_fn((k, grid.len()), |(kk, t)| trig_basis(kk + 1, t + 1, horizon))
}

/// Draws L random functions from μ and evaluates them on the grid.
///
/// Draw ℓ uses its own stream keyed by `(seed, ℓ)`, so the result does not
/// depend on how the work is scheduled.
pub fn draw_z(spec: &MuSpec, grid: &TimeGrid, l: usize) -> Result<ZDraws> {
    spec.validate()?;
    if l == 0 {
        return Err(Error::InvalidParameter("L must be at least 1".into()));
    }
    let basis = basis_matrix(spec.k, grid);
    let j = grid.len();
    let rows: Vec<Vec<f64>> = (0..l)
        .into_par_iter()
        .map(|ell| {
            let mut rng = rng::stream(spec.seed, rng::domain::Z_DRAWS, ell as u64);
            let coeffs: Vec<f64> = (1..=spec.k)
                .map(|k| spec.coeff_mean(k) + spec.coeff_sd * spec.coeff_law.sample(&mut rng))
                .collect();
            evaluate_expansion(&coeffs, &basis, j)
        })
        .collect();
    let values = Array2::from_shape_vec((l, j), rows.concat()).expect("L×J");
    Ok(ZDraws {
        values,
        source: ZSource::Basis(*spec),
    })
}

/// `Σ_k b_k ψ_k(t)` for each grid point.
pub fn evaluate_expansion(coeffs: &[f64], basis: &Array2<f64>, j: usize) -> Vec<f64> {
    (0..j)
        .map(|t| coeffs.iter().enumerate().map(|(k, b)| b * basis[[k, t]]).sum())
        .collect()
}
