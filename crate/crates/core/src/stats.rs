//! Test statistics: the simulated Cramér–von Mises type statistic τ̂, the
//! mean-path statistic ν, their multi-treatment sums, and the energy-distance
//! comparator.
//!
//! The free functions take explicit per-group matrices. The `*Evaluator`
//! types precompute everything that does not depend on group labels so a
//! statistic can be re-evaluated cheaply for each relabeling of the pooled
//! sample; for τ and ν they produce bit-identical values to the free
//! functions.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::ZDraws;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatKind {
    Tau,
    Nu,
    Energy,
}

impl std::fmt::Display for StatKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StatKind::Tau => "tau",
            StatKind::Nu => "nu",
            StatKind::Energy => "energy",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticValue {
    pub kind: StatKind,
    pub value: f64,
    /// Number of μ draws, for τ.
    pub draws: Option<usize>,
    pub group_sizes: Vec<usize>,
}

/// Compensated (Kahan–Babuška) accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn kahan_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut acc = KahanSum::default();
    for x in xs {
        acc.add(x);
    }
    acc.total()
}

#[inline]
fn dominated(path: ArrayView1<'_, f64>, z: ArrayView1<'_, f64>) -> bool {
    path.iter().zip(z.iter()).all(|(x, zz)| x <= zz)
}

#[inline]
fn fraction(count: usize, n: usize) -> f64 {
    count as f64 / n as f64
}

/// Share of paths with `X_i(t_j) <= z_j` at every grid point.
pub fn ecdf_indicator(paths: ArrayView2<'_, f64>, z: ArrayView1<'_, f64>) -> Result<f64> {
    if paths.ncols() != z.len() {
        return Err(Error::DimensionMismatch {
            expected: paths.ncols(),
            found: z.len(),
        });
    }
    if paths.nrows() == 0 {
        return Err(Error::EmptySample);
    }
    let count = paths.rows().into_iter().filter(|r| dominated(*r, z)).count();
    Ok(fraction(count, paths.nrows()))
}

/// One `(n_0 + n_s) L⁻¹ Σ_ℓ [F̂_0 − F̂_s]²` summand.
fn tau_term(n0: usize, ns: usize, f0: &[f64], fs: &[f64]) -> f64 {
    let l = f0.len();
    (n0 + ns) as f64 * kahan_sum(f0.iter().zip(fs).map(|(a, b)| (a - b) * (a - b))) / l as f64
}

/// One `(n_0 + n_s) J⁻¹ Σ_j [Ê_0 − Ê_s]²` summand.
fn nu_term(n0: usize, ns: usize, m0: &[f64], ms: &[f64]) -> f64 {
    let j = m0.len();
    (n0 + ns) as f64 * kahan_sum(m0.iter().zip(ms).map(|(a, b)| (a - b) * (a - b))) / j as f64
}

fn check_groups(groups: &[ArrayView2<'_, f64>], j: Option<usize>) -> Result<usize> {
    if groups.len() < 2 {
        return Err(Error::TooFewGroups {
            required: 2,
            found: groups.len(),
        });
    }
    let j = j.unwrap_or(groups[0].ncols());
    for (s, g) in groups.iter().enumerate() {
        if g.nrows() == 0 {
            return Err(Error::EmptyGroup { group: s });
        }
        if g.ncols() != j {
            return Err(Error::DimensionMismatch {
                expected: j,
                found: g.ncols(),
            });
        }
    }
    Ok(j)
}

fn sizes(groups: &[ArrayView2<'_, f64>]) -> Vec<usize> {
    groups.iter().map(|g| g.nrows()).collect()
}

/// Two-sample τ̂ over the draws in `z`.
pub fn tau_hat(
    group_a: ArrayView2<'_, f64>,
    group_b: ArrayView2<'_, f64>,
    z: &ZDraws,
) -> Result<StatisticValue> {
    tau_multi(&[group_a, group_b], z)
}

/// `Σ_s (n_0 + n_s) L⁻¹ Σ_ℓ [F̂_0(Z_ℓ) − F̂_s(Z_ℓ)]²`, group 0 being the control.
pub fn tau_multi(groups: &[ArrayView2<'_, f64>], z: &ZDraws) -> Result<StatisticValue> {
    check_groups(groups, Some(z.n_points()))?;
    let ecdfs: Vec<Vec<f64>> = groups
        .iter()
        .map(|g| {
            (0..z.len())
                .map(|l| ecdf_indicator(*g, z.row(l)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let n0 = groups[0].nrows();
    let value = (1..groups.len())
        .map(|s| tau_term(n0, groups[s].nrows(), &ecdfs[0], &ecdfs[s]))
        .sum();
    Ok(StatisticValue {
        kind: StatKind::Tau,
        value,
        draws: Some(z.len()),
        group_sizes: sizes(groups),
    })
}

fn column_means(g: ArrayView2<'_, f64>) -> Vec<f64> {
    let n = g.nrows() as f64;
    g.columns()
        .into_iter()
        .map(|c| kahan_sum(c.iter().copied()) / n)
        .collect()
}

/// Two-sample mean-path statistic ν.
pub fn nu(group_a: ArrayView2<'_, f64>, group_b: ArrayView2<'_, f64>) -> Result<StatisticValue> {
    nu_multi(&[group_a, group_b])
}

/// `Σ_s (n_0 + n_s) J⁻¹ Σ_j [Ê_0(t_j) − Ê_s(t_j)]²`.
pub fn nu_multi(groups: &[ArrayView2<'_, f64>]) -> Result<StatisticValue> {
    check_groups(groups, None)?;
    let means: Vec<Vec<f64>> = groups.iter().map(|g| column_means(*g)).collect();
    let n0 = groups[0].nrows();
    let value = (1..groups.len())
        .map(|s| nu_term(n0, groups[s].nrows(), &means[0], &means[s]))
        .sum();
    Ok(StatisticValue {
        kind: StatKind::Nu,
        value,
        draws: None,
        group_sizes: sizes(groups),
    })
}

fn euclidean(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn mean_distance(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> f64 {
    let mut acc = KahanSum::default();
    for ra in a.rows() {
        for rb in b.rows() {
            acc.add(euclidean(ra, rb));
        }
    }
    acc.total() / (a.nrows() * b.nrows()) as f64
}

fn energy_term(n0: usize, ns: usize, between: f64, within0: f64, within_s: f64) -> f64 {
    let w = (n0 * ns) as f64 / (n0 + ns) as f64;
    // V-statistic form; can only dip below zero through rounding.
    (w * (2.0 * between - within0 - within_s)).max(0.0)
}

/// Multi-sample energy statistic comparing each treatment group with control.
pub fn energy_statistic(groups: &[ArrayView2<'_, f64>]) -> Result<StatisticValue> {
    check_groups(groups, None)?;
    let n0 = groups[0].nrows();
    let within0 = mean_distance(groups[0], groups[0]);
    let value = (1..groups.len())
        .map(|s| {
            let g = groups[s];
            energy_term(
                n0,
                g.nrows(),
                mean_distance(groups[0], g),
                within0,
                mean_distance(g, g),
            )
        })
        .sum();
    Ok(StatisticValue {
        kind: StatKind::Energy,
        value,
        draws: None,
        group_sizes: sizes(groups),
    })
}

/// A statistic of the pooled sample under a group assignment.
pub trait PlanStatistic: Sync {
    fn kind(&self) -> StatKind;

    /// `assignment[i]` is the group of pooled unit `i`; group sizes must match
    /// the evaluator's.
    fn evaluate(&self, assignment: &[u32]) -> f64;
}

fn validate_pool(paths: ArrayView2<'_, f64>, group_sizes: &[usize]) -> Result<()> {
    if group_sizes.len() < 2 {
        return Err(Error::TooFewGroups {
            required: 2,
            found: group_sizes.len(),
        });
    }
    if let Some(s) = group_sizes.iter().position(|&n| n == 0) {
        return Err(Error::EmptyGroup { group: s });
    }
    let total: usize = group_sizes.iter().sum();
    if total != paths.nrows() {
        return Err(Error::DimensionMismatch {
            expected: total,
            found: paths.nrows(),
        });
    }
    Ok(())
}

/// τ under relabeling. Stores, for each draw ℓ, the set of pooled units lying
/// below `Z_ℓ` as a bitset; group counts are then popcounts.
#[derive(Debug, Clone)]
pub struct TauEvaluator {
    words: usize,
    n_draws: usize,
    bits: Vec<u64>,
    group_sizes: Vec<usize>,
}

impl TauEvaluator {
    pub fn new(paths: ArrayView2<'_, f64>, group_sizes: &[usize], z: &ZDraws) -> Result<Self> {
        validate_pool(paths, group_sizes)?;
        if paths.ncols() != z.n_points() {
            return Err(Error::DimensionMismatch {
                expected: paths.ncols(),
                found: z.n_points(),
            });
        }
        let n = paths.nrows();
        let words = n.div_ceil(64);
        let bits: Vec<u64> = (0..z.len())
            .into_par_iter()
            .flat_map_iter(|l| {
                let zl = z.row(l);
                let mut row = vec![0u64; words];
                for (i, path) in paths.rows().into_iter().enumerate() {
                    if dominated(path, zl) {
                        row[i / 64] |= 1 << (i % 64);
                    }
                }
                row
            })
            .collect();
        Ok(Self {
            words,
            n_draws: z.len(),
            bits,
            group_sizes: group_sizes.to_vec(),
        })
    }

    pub fn n_draws(&self) -> usize {
        self.n_draws
    }

    fn masks(&self, assignment: &[u32]) -> Vec<u64> {
        let mut masks = vec![0u64; self.group_sizes.len() * self.words];
        for (i, &g) in assignment.iter().enumerate() {
            masks[g as usize * self.words + i / 64] |= 1 << (i % 64);
        }
        masks
    }
}

impl PlanStatistic for TauEvaluator {
    fn kind(&self) -> StatKind {
        StatKind::Tau
    }

    fn evaluate(&self, assignment: &[u32]) -> f64 {
        let w = self.words;
        let n_groups = self.group_sizes.len();
        let masks = self.masks(assignment);
        let mut ecdfs = vec![Vec::with_capacity(self.n_draws); n_groups];
        for l in 0..self.n_draws {
            let row = &self.bits[l * w..(l + 1) * w];
            for (s, ecdf) in ecdfs.iter_mut().enumerate() {
                let mask = &masks[s * w..(s + 1) * w];
                let count: u32 = row.iter().zip(mask).map(|(a, b)| (a & b).count_ones()).sum();
                ecdf.push(fraction(count as usize, self.group_sizes[s]));
            }
        }
        let n0 = self.group_sizes[0];
        (1..n_groups)
            .map(|s| tau_term(n0, self.group_sizes[s], &ecdfs[0], &ecdfs[s]))
            .sum()
    }
}

/// ν under relabeling.
#[derive(Debug, Clone)]
pub struct NuEvaluator {
    paths: Array2<f64>,
    group_sizes: Vec<usize>,
}

impl NuEvaluator {
    pub fn new(paths: ArrayView2<'_, f64>, group_sizes: &[usize]) -> Result<Self> {
        validate_pool(paths, group_sizes)?;
        Ok(Self {
            paths: paths.to_owned(),
            group_sizes: group_sizes.to_vec(),
        })
    }
}

impl PlanStatistic for NuEvaluator {
    fn kind(&self) -> StatKind {
        StatKind::Nu
    }

    fn evaluate(&self, assignment: &[u32]) -> f64 {
        let j = self.paths.ncols();
        let n_groups = self.group_sizes.len();
        let mut acc = vec![KahanSum::default(); n_groups * j];
        for (row, &g) in self.paths.rows().into_iter().zip(assignment) {
            let base = g as usize * j;
            for (a, &x) in acc[base..base + j].iter_mut().zip(row.iter()) {
                a.add(x);
            }
        }
        let means: Vec<Vec<f64>> = (0..n_groups)
            .map(|s| {
                let n = self.group_sizes[s] as f64;
                acc[s * j..(s + 1) * j].iter().map(|a| a.total() / n).collect()
            })
            .collect();
        let n0 = self.group_sizes[0];
        (1..n_groups)
            .map(|s| nu_term(n0, self.group_sizes[s], &means[0], &means[s]))
            .sum()
    }
}

/// Energy statistic under relabeling, from a precomputed distance matrix.
#[derive(Debug, Clone)]
pub struct EnergyEvaluator {
    n: usize,
    /// Strict upper triangle, row-major.
    dist: Vec<f64>,
    group_sizes: Vec<usize>,
}

impl EnergyEvaluator {
    pub fn new(paths: ArrayView2<'_, f64>, group_sizes: &[usize]) -> Result<Self> {
        validate_pool(paths, group_sizes)?;
        let n = paths.nrows();
        let dist: Vec<f64> = (0..n)
            .into_par_iter()
            .flat_map_iter(|i| {
                let ri = paths.row(i);
                (i + 1..n).map(move |k| euclidean(ri, paths.row(k)))
            })
            .collect();
        Ok(Self {
            n,
            dist,
            group_sizes: group_sizes.to_vec(),
        })
    }
}

impl PlanStatistic for EnergyEvaluator {
    fn kind(&self) -> StatKind {
        StatKind::Energy
    }

    fn evaluate(&self, assignment: &[u32]) -> f64 {
        let g = self.group_sizes.len();
        // block[a][b] accumulates d(i, k) over i < k with labels (a, b).
        let mut block = vec![0.0f64; g * g];
        let mut idx = 0;
        for i in 0..self.n {
            let gi = assignment[i] as usize * g;
            for &gk in &assignment[i + 1..] {
                block[gi + gk as usize] += self.dist[idx];
                idx += 1;
            }
        }
        let within = |s: usize| 2.0 * block[s * g + s] / (self.group_sizes[s] * self.group_sizes[s]) as f64;
        let n0 = self.group_sizes[0];
        let within0 = within(0);
        (1..g)
            .map(|s| {
                let ns = self.group_sizes[s];
                let between = (block[s] + block[s * g]) / (n0 * ns) as f64;
                energy_term(n0, ns, between, within0, within(s))
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, concatenate, Axis};

    fn z(rows: Array2<f64>) -> ZDraws {
        ZDraws::from_matrix(rows).unwrap()
    }

    #[test]
    fn ecdf_examples() {
        assert_eq!(
            ecdf_indicator(array![[0.0]].view(), array![0.5].view()).unwrap(),
            1.0
        );
        assert_eq!(
            ecdf_indicator(array![[0.0, 2.0]].view(), array![1.0, 1.0].view()).unwrap(),
            0.0
        );
        let p = array![[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]];
        assert_eq!(
            ecdf_indicator(p.view(), array![1.0, 1.0].view()).unwrap(),
            2.0 / 3.0
        );
        assert!(matches!(
            ecdf_indicator(p.view(), array![1.0].view()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn tau_examples() {
        let a = array![[0.0]];
        let b = array![[1.0]];
        let zz = z(array![[0.5]]);
        assert_eq!(tau_hat(a.view(), b.view(), &zz).unwrap().value, 2.0);
        assert_eq!(tau_hat(a.view(), a.view(), &zz).unwrap().value, 0.0);
        assert!(tau_hat(a.view(), array![[1.0, 2.0]].view(), &zz).is_err());
    }

    #[test]
    fn nu_examples() {
        let v = nu(array![[1.0, 1.0]].view(), array![[0.0, 0.0]].view()).unwrap();
        assert_eq!(v.value, 2.0);
        let a = array![[1.0, 2.0], [3.0, 0.0]];
        let b = array![[2.0, 1.0]];
        assert_eq!(nu(a.view(), b.view()).unwrap().value, 0.0);
    }

    #[test]
    fn nu_multi_mean_shift() {
        let g0 = array![[0.0, 1.0, 2.0], [2.0, 1.0, 0.0]];
        let g1 = &g0 + 0.5;
        let v = nu_multi(&[g0.view(), g1.view(), g0.view()]).unwrap().value;
        assert!((v - 4.0 * 0.25).abs() < 1e-15);
    }

    #[test]
    fn multi_reduces_to_two_sample() {
        let a = array![[0.0, 1.0], [2.0, 0.5], [1.0, 1.0]];
        let b = array![[0.5, 0.5], [3.0, 1.0]];
        let zz = z(array![[1.0, 1.0], [2.0, 0.7], [0.1, 3.0]]);
        assert_eq!(
            tau_multi(&[a.view(), b.view()], &zz).unwrap().value,
            tau_hat(a.view(), b.view(), &zz).unwrap().value
        );
        assert_eq!(
            tau_multi(&[a.view(), b.view(), a.view()], &zz).unwrap().value,
            tau_hat(a.view(), b.view(), &zz).unwrap().value
        );
        assert_eq!(
            tau_multi(&[a.view(), a.view(), a.view()], &zz).unwrap().value,
            0.0
        );
        assert!(matches!(
            tau_multi(&[a.view()], &zz),
            Err(Error::TooFewGroups { .. })
        ));
    }

    #[test]
    fn energy_examples() {
        let e = energy_statistic(&[array![[0.0]].view(), array![[1.0]].view()]).unwrap();
        assert_eq!(e.value, 1.0);
        let p = array![[1.0, 2.0, 3.0]];
        assert_eq!(energy_statistic(&[p.view(), p.view()]).unwrap().value, 0.0);
        assert!(energy_statistic(&[p.view()]).is_err());
    }

    #[test]
    fn evaluators_match_free_functions() {
        let g0 = array![[0.1, 0.9], [1.2, 0.3], [0.4, 0.4]];
        let g1 = array![[0.8, 0.2], [0.0, 1.5]];
        let g2 = array![[1.0, 1.0], [0.6, 0.1], [0.2, 0.2], [0.9, 0.5]];
        let pooled = concatenate(Axis(0), &[g0.view(), g1.view(), g2.view()]).unwrap();
        let sizes = [3, 2, 4];
        let assign: Vec<u32> = vec![0, 0, 0, 1, 1, 2, 2, 2, 2];
        let zz = z(array![[1.0, 1.0], [0.5, 0.5], [1.3, 0.4], [0.7, 2.0]]);
        let groups = [g0.view(), g1.view(), g2.view()];

        let tau = TauEvaluator::new(pooled.view(), &sizes, &zz).unwrap();
        assert_eq!(tau.evaluate(&assign), tau_multi(&groups, &zz).unwrap().value);
        let nu_e = NuEvaluator::new(pooled.view(), &sizes).unwrap();
        assert_eq!(nu_e.evaluate(&assign), nu_multi(&groups).unwrap().value);
        let en = EnergyEvaluator::new(pooled.view(), &sizes).unwrap();
        let direct = energy_statistic(&groups).unwrap().value;
        assert!((en.evaluate(&assign) - direct).abs() < 1e-12);
    }

    #[test]
    fn evaluator_handles_many_words() {
        let n = 150;
        let pooled = Array2::from_shape_fn((n, 3), |(i, j)| ((i * 7 + j * 3) % 11) as f64);
        let sizes = [70, 80];
        let zz = z(array![[5.0, 5.0, 5.0], [9.0, 2.0, 10.0]]);
        let assign: Vec<u32> = (0..n).map(|i| u32::from(i >= 70)).collect();
        let tau = TauEvaluator::new(pooled.view(), &sizes, &zz).unwrap();
        let a = pooled.slice(ndarray::s![..70, ..]);
        let b = pooled.slice(ndarray::s![70.., ..]);
        assert_eq!(tau.evaluate(&assign), tau_hat(a, b, &zz).unwrap().value);
    }
}
