//! Domains, histograms, range-query workloads and privacy budgets.
//!
//! Two-dimensional cells are flattened row-major everywhere in the crate and
//! range bounds are inclusive and 0-based.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::RngStream;

/// A 1D or 2D grid of cells.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Domain {
    axis_sizes: Vec<usize>,
}

impl Domain {
    pub fn new(axis_sizes: Vec<usize>) -> Result<Self> {
        if axis_sizes.is_empty() || axis_sizes.len() > 2 {
            return Err(invalid(format!(
                "domains have 1 or 2 axes, got {}",
                axis_sizes.len()
            )));
        }
        if axis_sizes.contains(&0) {
            return Err(invalid("every axis size must be at least 1"));
        }
        Ok(Self { axis_sizes })
    }

    pub fn one_d(n: usize) -> Result<Self> {
        Self::new(vec![n])
    }

    pub fn two_d(rows: usize, cols: usize) -> Result<Self> {
        Self::new(vec![rows, cols])
    }

    pub fn axis_sizes(&self) -> &[usize] {
        &self.axis_sizes
    }

    pub fn dims(&self) -> usize {
        self.axis_sizes.len()
    }

    pub fn is_1d(&self) -> bool {
        self.axis_sizes.len() == 1
    }

    /// Number of cells `n`.
    pub fn cells(&self) -> usize {
        self.axis_sizes.iter().product()
    }

    /// `(rows, cols)`; a 1D domain is a single row.
    pub fn rows_cols(&self) -> (usize, usize) {
        match self.axis_sizes.as_slice() {
            [n] => (1, *n),
            [r, c] => (*r, *c),
            _ => unreachable!("validated at construction"),
        }
    }
}

impl std::fmt::Display for Domain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.axis_sizes.as_slice() {
            [n] => write!(f, "{n}"),
            [r, c] => write!(f, "{r}x{c}"),
            _ => unreachable!(),
        }
    }
}

impl std::str::FromStr for Domain {
    type Err = Error;

    /// Parses `"256"` or `"32x32"`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(['x', 'X']).collect();
        let sizes = parts
            .iter()
            .map(|p| {
                p.trim()
                    .parse::<usize>()
                    .map_err(|_| invalid(format!("bad domain size {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Domain::new(sizes)
    }
}

fn check_same_domain(expected: &Domain, found: &Domain) -> Result<()> {
    if expected != found {
        return Err(Error::DomainMismatch {
            expected: expected.to_string(),
            found: found.to_string(),
        });
    }
    Ok(())
}

/// A histogram of non-negative integer counts over a domain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataVector {
    domain: Domain,
    counts: Vec<u64>,
}

impl DataVector {
    pub fn new(domain: Domain, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != domain.cells() {
            return Err(invalid(format!(
                "domain {domain} has {} cells but {} counts were given",
                domain.cells(),
                counts.len()
            )));
        }
        Ok(Self { domain, counts })
    }

    pub fn from_1d(counts: Vec<u64>) -> Result<Self> {
        Self::new(Domain::one_d(counts.len())?, counts)
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Total number of records, `‖x‖₁`.
    pub fn scale(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64).collect()
    }

    /// Multiplies every count by `factor`.
    pub fn scaled_by(&self, factor: u64) -> Result<Self> {
        let counts = self
            .counts
            .iter()
            .map(|&c| {
                c.checked_mul(factor)
                    .ok_or_else(|| invalid("count overflow while scaling histogram"))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.domain.clone(), counts)
    }
}

/// A normalized histogram `p = x / ‖x‖₁`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shape {
    domain: Domain,
    probs: Vec<f64>,
}

impl Shape {
    /// Normalizes non-negative weights into a shape.
    pub fn from_weights(domain: Domain, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != domain.cells() {
            return Err(invalid("weight vector length does not match domain"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(invalid("shape weights must be finite and non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::UndefinedShape);
        }
        let probs = weights.into_iter().map(|w| w / total).collect();
        Ok(Self { domain, probs })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// Shape of a histogram; fails when the histogram is empty.
pub fn shape_of(x: &DataVector) -> Result<Shape> {
    let scale = x.scale();
    if scale == 0 {
        return Err(Error::UndefinedShape);
    }
    let s = scale as f64;
    Ok(Shape {
        domain: x.domain.clone(),
        probs: x.counts.iter().map(|&c| c as f64 / s).collect(),
    })
}

/// Sums adjacent blocks of cells, `factors[j]` cells per block along axis `j`.
pub fn coarsen(x: &DataVector, factors: &[usize]) -> Result<DataVector> {
    let sizes = x.domain.axis_sizes();
    if factors.len() != sizes.len() {
        return Err(invalid("one coarsening factor per axis is required"));
    }
    for (&f, &s) in factors.iter().zip(sizes) {
        if f == 0 || s % f != 0 {
            return Err(invalid(format!(
                "coarsening factor {f} does not divide axis size {s}"
            )));
        }
    }
    let new_sizes: Vec<usize> = sizes.iter().zip(factors).map(|(s, f)| s / f).collect();
    let domain = Domain::new(new_sizes)?;
    let (rows, cols) = x.domain.rows_cols();
    let (new_rows, new_cols) = domain.rows_cols();
    let (fr, fc) = if factors.len() == 1 {
        (1, factors[0])
    } else {
        (factors[0], factors[1])
    };
    let mut counts = vec![0u64; new_rows * new_cols];
    for r in 0..rows {
        for c in 0..cols {
            counts[(r / fr) * new_cols + c / fc] += x.counts[r * cols + c];
        }
    }
    DataVector::new(domain, counts)
}

/// An axis-aligned range with inclusive bounds per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RangeQuery {
    rows: (usize, usize),
    cols: (usize, usize),
}

impl RangeQuery {
    /// 1D range `[lo, hi]`.
    pub fn one_d(lo: usize, hi: usize) -> Self {
        Self {
            rows: (0, 0),
            cols: (lo, hi),
        }
    }

    /// 2D rectangle `rows × cols`.
    pub fn two_d(rows: (usize, usize), cols: (usize, usize)) -> Self {
        Self { rows, cols }
    }

    pub fn rows(&self) -> (usize, usize) {
        self.rows
    }

    pub fn cols(&self) -> (usize, usize) {
        self.cols
    }

    /// Bounds per axis of `domain` (one pair for 1D, two for 2D).
    pub fn bounds(&self, domain: &Domain) -> Vec<(usize, usize)> {
        if domain.is_1d() {
            vec![self.cols]
        } else {
            vec![self.rows, self.cols]
        }
    }

    fn validate(&self, domain: &Domain) -> Result<()> {
        let (rows, cols) = domain.rows_cols();
        let ok = |(lo, hi): (usize, usize), n: usize| lo <= hi && hi < n;
        if ok(self.rows, rows) && ok(self.cols, cols) {
            Ok(())
        } else {
            Err(invalid(format!("query {self:?} is out of bounds for domain {domain}")))
        }
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.rows.0..=self.rows.1).contains(&row) && (self.cols.0..=self.cols.1).contains(&col)
    }

    pub fn cell_count(&self) -> usize {
        (self.rows.1 - self.rows.0 + 1) * (self.cols.1 - self.cols.0 + 1)
    }
}

/// An ordered list of range queries over one domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workload {
    domain: Domain,
    queries: Vec<RangeQuery>,
}

impl Workload {
    pub fn new(domain: Domain, queries: Vec<RangeQuery>) -> Result<Self> {
        if queries.is_empty() {
            return Err(invalid("a workload needs at least one query"));
        }
        for q in &queries {
            q.validate(&domain)?;
        }
        Ok(Self { domain, queries })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn queries(&self) -> &[RangeQuery] {
        &self.queries
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    /// Answers every query on a real-valued cell vector.
    pub fn evaluate(&self, cells: &[f64]) -> Vec<f64> {
        assert_eq!(cells.len(), self.domain.cells(), "cell vector length");
        let (rows, cols) = self.domain.rows_cols();
        let table = SummedArea::new(rows, cols, cells.iter().copied(), 0.0);
        self.queries.iter().map(|q| table.rect(q)).collect()
    }
}

/// Inclusive 2D prefix sums; a 1D vector is one row.
pub(crate) struct SummedArea<T> {
    cols: usize,
    sums: Vec<T>,
}

impl<T> SummedArea<T>
where
    T: Copy + std::ops::Add<Output = T> + std::ops::Sub<Output = T>,
{
    pub(crate) fn new(rows: usize, cols: usize, cells: impl Iterator<Item = T>, zero: T) -> Self {
        let stride = cols + 1;
        let mut sums = vec![zero; (rows + 1) * stride];
        let mut it = cells;
        for r in 0..rows {
            let mut row_sum = zero;
            for c in 0..cols {
                row_sum = row_sum + it.next().expect("cell count");
                sums[(r + 1) * stride + c + 1] = sums[r * stride + c + 1] + row_sum;
            }
        }
        Self { cols: stride, sums }
    }

    pub(crate) fn rect(&self, q: &RangeQuery) -> T {
        let (r0, r1) = q.rows;
        let (c0, c1) = q.cols;
        let at = |r: usize, c: usize| self.sums[r * self.cols + c];
        at(r1 + 1, c1 + 1) - at(r0, c1 + 1) - at(r1 + 1, c0) + at(r0, c0)
    }
}

/// Exact answers `Wx`.
pub fn answer_workload(w: &Workload, x: &DataVector) -> Result<Vec<f64>> {
    check_same_domain(&w.domain, &x.domain)?;
    let (rows, cols) = w.domain.rows_cols();
    let table = SummedArea::new(rows, cols, x.counts.iter().map(|&c| c as i128), 0i128);
    Ok(w.queries.iter().map(|q| table.rect(q) as f64).collect())
}

/// All ranges `[0, i]` of a 1D domain.
pub fn make_prefix_workload(domain: &Domain) -> Result<Workload> {
    if !domain.is_1d() {
        return Err(invalid("prefix workloads are defined for 1D domains only"));
    }
    let n = domain.cells();
    Workload::new(domain.clone(), (0..n).map(|i| RangeQuery::one_d(0, i)).collect())
}

/// One single-cell query per cell, in cell order.
pub fn make_identity_workload(domain: &Domain) -> Result<Workload> {
    let (rows, cols) = domain.rows_cols();
    let queries = (0..rows)
        .flat_map(|r| (0..cols).map(move |c| RangeQuery::two_d((r, r), (c, c))))
        .map(|q| {
            if domain.is_1d() {
                RangeQuery::one_d(q.cols.0, q.cols.1)
            } else {
                q
            }
        })
        .collect();
    Workload::new(domain.clone(), queries)
}

/// `count` random ranges: per axis two uniform cell indices, ordered.
pub fn make_random_range_workload(domain: &Domain, count: usize, seed: u64) -> Result<Workload> {
    if count == 0 {
        return Err(invalid("count must be at least 1"));
    }
    let mut rng = RngStream::new(seed, RngStream::WORKLOAD_STREAM);
    let (rows, cols) = domain.rows_cols();
    let pick = |n: usize, rng: &mut RngStream| {
        let a = rng.index(n);
        let b = rng.index(n);
        (a.min(b), a.max(b))
    };
    let queries = (0..count)
        .map(|_| {
            if domain.is_1d() {
                let (lo, hi) = pick(cols, &mut rng);
                RangeQuery::one_d(lo, hi)
            } else {
                let r = pick(rows, &mut rng);
                let c = pick(cols, &mut rng);
                RangeQuery::two_d(r, c)
            }
        })
        .collect();
    Workload::new(domain.clone(), queries)
}

/// A positive, finite privacy budget ε.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct PrivacyBudget(f64);

impl PrivacyBudget {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(invalid(format!("epsilon must be positive and finite, got {epsilon}")));
        }
        Ok(Self(epsilon))
    }

    pub fn epsilon(self) -> f64 {
        self.0
    }
}
