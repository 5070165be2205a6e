//! Pieces shared by several mechanisms: partitions, absolute-deviation scans,
//! query linearization and scale side information.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::{DataVector, RangeQuery, Workload};
use crate::primitives::{laplace, BudgetLedger};
use crate::rng::RngStream;

/// Disjoint contiguous buckets covering `0..len`, each with an estimated count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub buckets: Vec<Range<usize>>,
    pub counts: Vec<f64>,
}

impl Partition {
    pub fn new(buckets: Vec<Range<usize>>, counts: Vec<f64>) -> Result<Self> {
        if buckets.is_empty() || buckets.len() != counts.len() {
            return Err(invalid("a partition needs one count per bucket"));
        }
        let mut next = 0;
        for b in &buckets {
            if b.start != next || b.end <= b.start {
                return Err(invalid(format!("bucket {b:?} breaks the cover at {next}")));
            }
            next = b.end;
        }
        Ok(Self { buckets, counts })
    }

    /// Buckets with zero counts, for callers that only need the structure.
    pub fn from_buckets(buckets: Vec<Range<usize>>) -> Result<Self> {
        let counts = vec![0.0; buckets.len()];
        Self::new(buckets, counts)
    }

    pub fn len(&self) -> usize {
        self.buckets.last().map_or(0, |b| b.end)
    }

    pub fn is_empty(&self) -> bool {
        self.buckets.is_empty()
    }

    /// Exact bucket sums of `values`.
    pub fn sums(&self, values: &[f64]) -> Vec<f64> {
        self.buckets.iter().map(|b| values[b.clone()].iter().sum()).collect()
    }
}

/// Spreads each bucket's count evenly over its cells.
pub fn expand_uniform(p: &Partition) -> Vec<f64> {
    let mut out = vec![0.0; p.len()];
    for (b, &c) in p.buckets.iter().zip(&p.counts) {
        let share = c / b.len() as f64;
        out[b.clone()].iter_mut().for_each(|o| *o = share);
    }
    out
}

/// Spreads each group's count evenly over its (arbitrary) member cells.
pub fn expand_groups(groups: &[Vec<usize>], counts: &[f64], cells: usize) -> Vec<f64> {
    let mut out = vec![0.0; cells];
    for (g, &c) in groups.iter().zip(counts) {
        let share = c / g.len() as f64;
        for &i in g {
            out[i] = share;
        }
    }
    out
}

/// Fenwick tree over `f64` sums.
struct Fenwick {
    tree: Vec<f64>,
}

impl Fenwick {
    fn new(n: usize) -> Self {
        Self { tree: vec![0.0; n + 1] }
    }

    fn add(&mut self, i: usize, v: f64) {
        let mut i = i + 1;
        while i < self.tree.len() {
            self.tree[i] += v;
            i += i & i.wrapping_neg();
        }
    }

    /// Sum over indices `< i`.
    fn prefix(&self, i: usize) -> f64 {
        let mut i = i;
        let mut s = 0.0;
        while i > 0 {
            s += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}

/// `out[k]` is `Σ |v − mean|` over `values[..=k]`, in `O(n log n)`.
pub fn prefix_abs_dev(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = |v: f64| sorted.partition_point(|&s| s < v);
    let mut counts = Fenwick::new(n);
    let mut sums = Fenwick::new(n);
    let mut total = 0.0;
    let mut out = Vec::with_capacity(n);
    for (k, &v) in values.iter().enumerate() {
        counts.add(rank(v), 1.0);
        sums.add(rank(v), v);
        total += v;
        let mean = total / (k + 1) as f64;
        // Values strictly below the mean sit at ranks below `rank(mean)`.
        let r = rank(mean);
        let (c_lo, s_lo) = (counts.prefix(r), sums.prefix(r));
        let (c_hi, s_hi) = ((k + 1) as f64 - c_lo, total - s_lo);
        out.push(((mean * c_lo - s_lo) + (s_hi - mean * c_hi)).max(0.0));
    }
    out
}

/// `Σ |v − mean|` of one slice.
pub fn abs_dev(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|v| (v - mean).abs()).sum()
}

/// A linear query as a sorted list of disjoint position intervals.
pub type IntervalSet = Vec<Range<usize>>;

/// Merges sorted positions into maximal runs.
pub fn runs(sorted_positions: &[usize]) -> IntervalSet {
    let mut out: IntervalSet = Vec::new();
    for &p in sorted_positions {
        match out.last_mut() {
            Some(r) if r.end == p => r.end = p + 1,
            _ => out.push(p..p + 1),
        }
    }
    out
}

/// Each query of a 1D workload as a single interval.
pub fn workload_intervals(w: &Workload) -> Vec<IntervalSet> {
    w.queries()
        .iter()
        .map(|q| {
            let (lo, hi) = q.cols();
            vec![lo..hi + 1]
        })
        .collect()
}

/// Cells of a query, row-major.
pub fn query_cells(q: &RangeQuery, cols: usize) -> impl Iterator<Item = usize> + '_ {
    let (r0, r1) = q.rows();
    let (c0, c1) = q.cols();
    (r0..=r1).flat_map(move |r| (c0..=c1).map(move |c| r * cols + c))
}

/// How a mechanism learns the dataset scale it needs as a parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
#[derive(Default)]
pub enum ScaleInfo {
    /// The true scale is given as side information.
    #[default]
    Exact,
    /// A `rho_total` share of the budget buys a noisy estimate.
    Noisy { rho_total: f64 },
}


/// Noisy scale `max(1, ‖x‖₁ + Laplace(1/(ρ·ε)))` and the remaining budget.
pub fn estimate_scale_side(
    x: &DataVector,
    epsilon: f64,
    rho_total: f64,
    rng: &mut RngStream,
) -> Result<(f64, f64)> {
    let mut ledger = BudgetLedger::new(epsilon);
    scale_from_ledger(x, epsilon, ScaleInfo::Noisy { rho_total }, &mut ledger, rng)
}

/// Resolves the scale for a mechanism, charging `ledger` when it costs budget.
pub(crate) fn scale_from_ledger(
    x: &DataVector,
    epsilon: f64,
    info: ScaleInfo,
    ledger: &mut BudgetLedger,
    rng: &mut RngStream,
) -> Result<(f64, f64)> {
    match info {
        ScaleInfo::Exact => Ok((x.scale() as f64, epsilon)),
        ScaleInfo::Noisy { rho_total } => {
            if !(rho_total > 0.0 && rho_total < 1.0) {
                return Err(invalid(format!("rho_total must lie in (0, 1), got {rho_total}")));
            }
            let (side, rest) = ledger.split_pair(epsilon, rho_total)?;
            ledger.charge("scale", side)?;
            let noisy = x.scale() as f64 + laplace(rng, 1.0 / side);
            Ok((noisy.max(1.0), rest))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn expand_examples() {
        let p = Partition::new(vec![0..5], vec![10.0]).unwrap();
        assert_eq!(expand_uniform(&p), vec![2.0; 5]);
        let p = Partition::new(vec![0..1, 1..2, 2..3], vec![4.0, 0.0, 7.0]).unwrap();
        assert_eq!(expand_uniform(&p), vec![4.0, 0.0, 7.0]);
    }

    #[test]
    fn partition_must_cover() {
        assert!(Partition::from_buckets(vec![0..2, 3..4]).is_err());
        assert!(Partition::from_buckets(vec![0..2, 2..2]).is_err());
    }

    #[test]
    fn runs_merge_adjacent_positions() {
        assert_eq!(runs(&[0, 1, 2, 5, 7, 8]), vec![0..3, 5..6, 7..9]);
    }

    #[test]
    fn noisy_scale_leaves_the_rest() {
        let x = DataVector::from_1d(vec![5; 8]).unwrap();
        let mut rng = RngStream::new(3, 0);
        let (s, rest) = estimate_scale_side(&x, 1.0, 0.05, &mut rng).unwrap();
        assert!(s >= 1.0);
        assert!((rest - 0.95).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn prefix_abs_dev_matches_direct(values in prop::collection::vec(-50i32..50, 1..40)) {
            let v: Vec<f64> = values.iter().map(|&x| x as f64).collect();
            let fast = prefix_abs_dev(&v);
            for k in 0..v.len() {
                prop_assert!((fast[k] - abs_dev(&v[..=k])).abs() < 1e-9);
            }
        }

        #[test]
        fn expansion_preserves_totals(sizes in prop::collection::vec(1usize..6, 1..10)) {
            let mut start = 0;
            let mut buckets = Vec::new();
            for s in &sizes {
                buckets.push(start..start + s);
                start += s;
            }
            let counts: Vec<f64> = sizes.iter().map(|&s| s as f64 * 1.5 + 1.0).collect();
            let p = Partition::new(buckets, counts.clone()).unwrap();
            let total: f64 = expand_uniform(&p).iter().sum();
            prop_assert!((total - counts.iter().sum::<f64>()).abs() < 1e-9);
        }
    }
}
