//! Discretely observed functional data: ingestion, validation, and grouping.
//!
//! CSV layout: a header `id,group,t1,...,tJ` followed by one row per unit.
//! Group ids must be contiguous from 0; group 0 is the control.

use std::io::{Read, Write};

use ndarray::{Array2, ArrayView1, Axis};

use crate::error::{Error, Result};

/// Ordered observation times. Only the count and order of the points matter.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    labels: Vec<String>,
}

impl TimeGrid {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidParameter(
                "time grid needs at least one point".into(),
            ));
        }
        Ok(Self { labels })
    }

    /// Grid `t1..tJ`.
    pub fn regular(j: usize) -> Result<Self> {
        Self::new((1..=j).map(|t| format!("t{t}")).collect())
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Number of grid points J.
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Horizon T, which equals J.
    pub fn horizon(&self) -> usize {
        self.labels.len()
    }

    /// Grid indices 1..=J.
    pub fn points(&self) -> impl Iterator<Item = usize> {
        1..=self.labels.len()
    }
}

/// A validated sample of paths with group labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalSample {
    ids: Vec<String>,
    paths: Array2<f64>,
    labels: Vec<usize>,
    grid: TimeGrid,
    group_sizes: Vec<usize>,
}

impl FunctionalSample {
    /// Builds a sample, assigning ids `1..=N`.
    pub fn new(paths: Array2<f64>, labels: Vec<usize>, grid: TimeGrid) -> Result<Self> {
        let ids = (1..=paths.nrows()).map(|i| i.to_string()).collect();
        Self::with_ids(ids, paths, labels, grid)
    }

    pub fn with_ids(
        ids: Vec<String>,
        paths: Array2<f64>,
        labels: Vec<usize>,
        grid: TimeGrid,
    ) -> Result<Self> {
        if paths.nrows() == 0 {
            return Err(Error::EmptySample);
        }
        if paths.ncols() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                found: paths.ncols(),
            });
        }
        if labels.len() != paths.nrows() || ids.len() != paths.nrows() {
            return Err(Error::DimensionMismatch {
                expected: paths.nrows(),
                found: labels.len().min(ids.len()),
            });
        }
        for ((row, col), v) in paths.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::NonNumeric {
                    row: row + 1,
                    col: col + 3,
                });
            }
        }
        let group_sizes = group_sizes(&labels)?;
        Ok(Self {
            ids,
            paths,
            labels,
            grid,
            group_sizes,
        })
    }

    /// Builds a sample by stacking per-group matrices in group order.
    pub fn from_groups(groups: &[Array2<f64>]) -> Result<Self> {
        let first = groups.first().ok_or(Error::EmptySample)?;
        let j = first.ncols();
        let views: Vec<_> = groups.iter().map(|g| g.view()).collect();
        for g in groups {
            if g.ncols() != j {
                return Err(Error::DimensionMismatch {
                    expected: j,
                    found: g.ncols(),
                });
            }
        }
        for (s, g) in groups.iter().enumerate() {
            if g.nrows() == 0 {
                return Err(Error::EmptyGroup { group: s });
            }
        }
        let paths =
            ndarray::concatenate(Axis(0), &views).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let labels = groups
            .iter()
            .enumerate()
            .flat_map(|(s, g)| std::iter::repeat_n(s, g.nrows()))
            .collect();
        Self::new(paths, labels, TimeGrid::regular(j)?)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    /// N×J matrix of paths in input order.
    pub fn paths(&self) -> &Array2<f64> {
        &self.paths
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// `n_0, ..., n_S`.
    pub fn group_sizes(&self) -> &[usize] {
        &self.group_sizes
    }

    pub fn n_groups(&self) -> usize {
        self.group_sizes.len()
    }

    /// Total number of units N.
    pub fn n_units(&self) -> usize {
        self.paths.nrows()
    }

    pub fn n_points(&self) -> usize {
        self.paths.ncols()
    }

    pub fn path(&self, i: usize) -> ArrayView1<'_, f64> {
        self.paths.row(i)
    }

    /// Per-group path matrices, preserving input order within each group.
    pub fn split_by_group(&self) -> Vec<Array2<f64>> {
        (0..self.n_groups())
            .map(|s| {
                let rows: Vec<usize> = (0..self.n_units()).filter(|&i| self.labels[i] == s).collect();
                self.paths.select(Axis(0), &rows)
            })
            .collect()
    }
}

fn group_sizes(labels: &[usize]) -> Result<Vec<usize>> {
    let n_groups = labels.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; n_groups];
    for &g in labels {
        sizes[g] += 1;
    }
    if let Some(missing) = sizes.iter().position(|&c| c == 0) {
        return Err(Error::NonContiguousGroups { missing });
    }
    Ok(sizes)
}

/// Parses and validates a sample from CSV.
///
/// Row and column numbers in errors are 1-based and count the header as row 0.
pub fn load_samples<R: Read>(source: R) -> Result<FunctionalSample> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let mut records = reader.records();

    let header = match records.next() {
        Some(rec) => rec.map_err(|e| Error::Io(e.to_string()))?,
        None => return Err(Error::MissingHeader),
    };
    if header.len() < 3 || !header[0].eq_ignore_ascii_case("id") || !header[1].eq_ignore_ascii_case("group") {
        return Err(Error::BadHeader);
    }
    let width = header.len();
    let grid = TimeGrid::new(header.iter().skip(2).map(str::to_string).collect())?;
    let j = grid.len();

    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut values = Vec::new();
    for (idx, rec) in records.enumerate() {
        let row = idx + 1;
        let rec = rec.map_err(|e| Error::Io(e.to_string()))?;
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != width {
            return Err(Error::MalformedRow {
                row,
                expected: width,
                found: rec.len(),
            });
        }
        ids.push(rec[0].to_string());
        labels.push(parse_group(&rec[1], row)?);
        for (k, field) in rec.iter().skip(2).enumerate() {
            let col = k + 3;
            let v: f64 = field.parse().map_err(|_| Error::NonNumeric { row, col })?;
            if !v.is_finite() {
                return Err(Error::NonNumeric { row, col });
            }
            values.push(v);
        }
    }
    if labels.is_empty() {
        return Err(Error::NoRows);
    }
    let paths = Array2::from_shape_vec((labels.len(), j), values).expect("row widths validated above");
    FunctionalSample::with_ids(ids, paths, labels, grid)
}

fn parse_group(field: &str, row: usize) -> Result<usize> {
    if field.is_empty() {
        return Err(Error::MissingGroup { row });
    }
    match field.parse::<i64>() {
        Ok(g) if g < 0 => Err(Error::NegativeGroup { row }),
        Ok(g) => Ok(g as usize),
        Err(_) => Err(Error::InvalidGroup {
            row,
            value: field.to_string(),
        }),
    }
}

/// Writes a sample in the format accepted by [`load_samples`].
///
/// Values use the shortest representation that parses back to the same `f64`.
pub fn write_samples<W: Write>(sample: &FunctionalSample, mut out: W) -> Result<()> {
    write!(out, "id,group")?;
    for label in sample.grid().labels() {
        write!(out, ",{label}")?;
    }
    writeln!(out)?;
    for i in 0..sample.n_units() {
        write!(out, "{},{}", sample.ids[i], sample.labels[i])?;
        for v in sample.path(i) {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}
