//! Partition-based mechanisms: Uniform, PHP, DAWA, StructureFirst and AHP.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::algorithms::common::{
    abs_dev, expand_groups, expand_uniform, prefix_abs_dev, scale_from_ledger, workload_intervals,
    IntervalSet, Partition, ScaleInfo,
};
use crate::algorithms::independent::{greedy_h_positions, measure_hierarchy};
use crate::algorithms::spatial::hilbert_linearize;
use crate::algorithms::{begin, finish, require_1d, MechanismResult};
use crate::error::{invalid, Result};
use crate::model::{DataVector, Workload};
use crate::primitives::{exponential_mechanism, laplace, BudgetLedger, Hierarchy};
use crate::rng::RngStream;

pub fn uniform_run(
    x: &DataVector,
    w: &Workload,
    epsilon: f64,
    rng: &mut RngStream,
) -> Result<MechanismResult> {
    let mut ledger = begin(x, w, epsilon)?;
    ledger.charge("scale", epsilon)?;
    let total = x.scale() as f64 + laplace(rng, 1.0 / epsilon);
    let n = x.domain().cells();
    finish(w, vec![total / n as f64; n], ledger)
}

/// Adds Laplace(1/ε) to each bucket sum of `values` (buckets are disjoint).
fn measure_buckets(
    buckets: Vec<Range<usize>>,
    values: &[f64],
    epsilon: f64,
    rng: &mut RngStream,
) -> Result<Partition> {
    let mut p = Partition::from_buckets(buckets)?;
    let scale = 1.0 / epsilon;
    p.counts = p.sums(values).into_iter().map(|s| s + laplace(rng, scale)).collect();
    Ok(p)
}

/// PHP: recursive private bisection, then uniform bucket estimates.
pub fn php_run(
    x: &DataVector,
    w: &Workload,
    epsilon: f64,
    rho: f64,
    rng: &mut RngStream,
) -> Result<MechanismResult> {
    require_1d(x, "php")?;
    let mut ledger = begin(x, w, epsilon)?;
    let values = x.to_f64();
    let (eps_split, eps_count) = ledger.split_pair(epsilon, rho)?;
    let buckets = php_partition(&values, eps_split, &mut ledger, rng)?;
    ledger.charge("bucket counts", eps_count)?;
    let p = measure_buckets(buckets, &values, eps_count, rng)?;
    finish(w, expand_uniform(&p), ledger)
}

/// At most `⌈log₂ n⌉` rounds; each round bisects every interval longer than
/// one cell, the cut drawn by the exponential mechanism with score
/// `−(SAE(left) + SAE(right))` (sensitivity 2).
pub fn php_partition(
    values: &[f64],
    epsilon: f64,
    ledger: &mut BudgetLedger,
    rng: &mut RngStream,
) -> Result<Vec<Range<usize>>> {
    let n = values.len();
    let rounds = php_rounds(n);
    let mut intervals = vec![0..n];
    for (round, eps) in ledger.split_even(epsilon, rounds)?.into_iter().enumerate() {
        ledger.charge(format!("bisection {round}"), eps)?;
        let mut next = Vec::with_capacity(intervals.len() * 2);
        for r in intervals {
            if r.len() < 2 {
                next.push(r);
                continue;
            }
            let slice = &values[r.clone()];
            let left = prefix_abs_dev(slice);
            let mut rev: Vec<f64> = slice.to_vec();
            rev.reverse();
            let right = prefix_abs_dev(&rev);
            let len = slice.len();
            // Cut after `s + 1` cells: left = slice[..=s], right = slice[s+1..].
            let scores: Vec<f64> = (0..len - 1)
                .map(|s| -(left[s] + right[len - 2 - s]))
                .collect();
            let s = exponential_mechanism(&scores, eps, 2.0, rng)?;
            let cut = r.start + s + 1;
            next.push(r.start..cut);
            next.push(cut..r.end);
        }
        intervals = next;
    }
    Ok(intervals)
}

pub fn php_rounds(n: usize) -> usize {
    (n.max(2).next_power_of_two().ilog2() as usize).max(1)
}

/// DAWA: private least-cost partition, then Greedy-H over the buckets.
/// 2D data is linearized along a Hilbert curve first.
pub fn dawa_run(
    x: &DataVector,
    w: &Workload,
    epsilon: f64,
    rho: f64,
    branching: usize,
    rng: &mut RngStream,
) -> Result<MechanismResult> {
    let mut ledger = begin(x, w, epsilon)?;
    let (eps_part, eps_measure) = ledger.split_pair(epsilon, rho)?;
    let estimate = if x.domain().is_1d() {
        let queries = workload_intervals(w);
        dawa_positions(&x.to_f64(), &queries, eps_part, eps_measure, branching, &mut ledger, rng)?
    } else {
        let lin = hilbert_linearize(x)?;
        let queries: Vec<IntervalSet> = w.queries().iter().map(|q| lin.query_intervals(q)).collect();
        let pos = dawa_positions(
            &lin.data.to_f64(),
            &queries,
            eps_part,
            eps_measure,
            branching,
            &mut ledger,
            rng,
        )?;
        lin.to_cells(&pos)
    };
    finish(w, estimate, ledger)
}

fn dawa_positions(
    values: &[f64],
    queries: &[IntervalSet],
    eps_part: f64,
    eps_measure: f64,
    branching: usize,
    ledger: &mut BudgetLedger,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    ledger.charge("partition", eps_part)?;
    let partition = dawa_partition(values, eps_part, eps_measure, rng)?;
    let bucket_values = partition.sums(values);
    let bucket_of: Vec<usize> = partition
        .buckets
        .iter()
        .enumerate()
        .flat_map(|(i, b)| std::iter::repeat_n(i, b.len()))
        .collect();
    // A query over buckets covers every bucket it touches; the uniform
    // expansion answers partial buckets proportionally afterwards.
    let bucket_queries: Vec<IntervalSet> = queries
        .iter()
        .map(|set| {
            let mut out: IntervalSet = Vec::new();
            for r in set {
                let b = bucket_of[r.start]..bucket_of[r.end - 1] + 1;
                match out.last_mut() {
                    Some(last) if last.end >= b.start => last.end = last.end.max(b.end),
                    _ => out.push(b),
                }
            }
            out
        })
        .collect();
    let counts = greedy_h_positions(&bucket_values, &bucket_queries, branching, eps_measure, ledger, rng)?;
    let measured = Partition::new(partition.buckets, counts)?;
    Ok(expand_uniform(&measured))
}

/// Candidate intervals for the private partition: aligned dyadic blocks
/// (truncated at `n`). Every cell lies in at most `⌈log₂ n⌉ + 1` of them.
pub fn dyadic_intervals(n: usize) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut size = 1;
    loop {
        let mut start = 0;
        while start < n {
            out.push(start..(start + size).min(n));
            start += size;
        }
        if size >= n {
            break;
        }
        size *= 2;
    }
    out
}

/// Private partition: dyadic interval costs `SAE + Laplace(2(⌈log₂n⌉+1)/ε₁)`,
/// each bucket charged `1/ε₂` for its measurement noise.
pub fn dawa_partition(
    values: &[f64],
    eps_part: f64,
    eps_measure: f64,
    rng: &mut RngStream,
) -> Result<Partition> {
    if !(eps_part > 0.0 && eps_measure > 0.0) {
        return Err(invalid("both DAWA budgets must be positive"));
    }
    let n = values.len();
    let noise = 2.0 * (n.max(2).next_power_of_two().ilog2() as f64 + 1.0) / eps_part;
    let candidates: Vec<(Range<usize>, f64)> = dyadic_intervals(n)
        .into_iter()
        .map(|r| {
            let cost = abs_dev(&values[r.clone()]) + laplace(rng, noise);
            (r, cost)
        })
        .collect();
    let buckets = least_cost_partition(n, candidates, 1.0 / eps_measure)?;
    Partition::from_buckets(buckets)
}

/// Exact least-cost partition over every contiguous interval, used as the
/// noise-free reference for the dynamic program.
pub fn exact_least_cost_partition(values: &[f64], penalty: f64) -> Result<Vec<Range<usize>>> {
    let n = values.len();
    let mut candidates = Vec::with_capacity(n * (n + 1) / 2);
    for start in 0..n {
        for (k, cost) in prefix_abs_dev(&values[start..]).into_iter().enumerate() {
            candidates.push((start..start + k + 1, cost));
        }
    }
    least_cost_partition(n, candidates, penalty)
}

/// Minimizes `Σ cost(bucket) + penalty·|P|` over partitions of `0..n` built
/// from `candidates`; ties go to fewer buckets.
pub fn least_cost_partition(
    n: usize,
    mut candidates: Vec<(Range<usize>, f64)>,
    penalty: f64,
) -> Result<Vec<Range<usize>>> {
    candidates.sort_by_key(|(r, _)| (r.end, r.start));
    let mut best: Vec<Option<(f64, usize, usize)>> = vec![None; n + 1];
    best[0] = Some((0.0, 0, 0));
    for (i, (r, cost)) in candidates.iter().enumerate() {
        let Some((base, count, _)) = best[r.start] else { continue };
        let total = base + cost + penalty;
        let better = match best[r.end] {
            None => true,
            Some((c, k, _)) => {
                let tol = 1e-9 * c.abs().max(total.abs()).max(1.0);
                total < c - tol || ((total - c).abs() <= tol && count + 1 < k)
            }
        };
        if better {
            best[r.end] = Some((total, count + 1, i));
        }
    }
    let mut out = Vec::new();
    let mut end = n;
    while end > 0 {
        let (_, _, i) = best[end].ok_or_else(|| invalid("candidate intervals do not cover the domain"))?;
        let r = candidates[i].0.clone();
        end = r.start;
        out.push(r);
    }
    out.reverse();
    Ok(out)
}

/// How StructureFirst divides its budget between structure and counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum SfBudgetRule {
    /// A fixed structure share `ρ`.
    Fixed { rho: f64 },
    /// `ρ = c/(1+c)`, `c = ((k−1)(2F+1)/k)^{1/3}`: more buckets and larger
    /// counts make boundaries harder to place, so they get a larger share.
    CubeRoot,
}

impl SfBudgetRule {
    pub fn rho(&self, k: usize, bound: f64) -> f64 {
        match *self {
            SfBudgetRule::Fixed { rho } => rho,
            SfBudgetRule::CubeRoot => {
                if k <= 1 {
                    return 0.0;
                }
                let c = ((k - 1) as f64 * (2.0 * bound + 1.0) / k as f64).cbrt();
                c / (1.0 + c)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SfParams {
    /// Bucket count; `None` means `⌈n/10⌉`.
    pub buckets: Option<usize>,
    pub scale: ScaleInfo,
    pub rule: SfBudgetRule,
    /// Measure each bucket through a binary hierarchy instead of one count.
    pub hierarchical: bool,
}

impl Default for SfParams {
    fn default() -> Self {
        Self {
            buckets: None,
            scale: ScaleInfo::Exact,
            rule: SfBudgetRule::CubeRoot,
            hierarchical: true,
        }
    }
}

pub fn sf_default_buckets(n: usize) -> usize {
    n.div_ceil(10)
}

/// StructureFirst (mean variant).
pub fn sf_run(
    x: &DataVector,
    w: &Workload,
    epsilon: f64,
    params: &SfParams,
    rng: &mut RngStream,
) -> Result<MechanismResult> {
    require_1d(x, "sf")?;
    let mut ledger = begin(x, w, epsilon)?;
    let n = x.domain().cells();
    let k = params.buckets.unwrap_or_else(|| sf_default_buckets(n));
    if k == 0 || k > n {
        return Err(invalid(format!("bucket count {k} must lie in 1..={n}")));
    }
    let (bound, eps) = scale_from_ledger(x, epsilon, params.scale, &mut ledger, rng)?;
    let (eps_struct, eps_count) = ledger.split_pair(eps, params.rule.rho(k, bound))?;
    let values = x.to_f64();
    let buckets = sf_boundaries(&values, k, bound, eps_struct, &mut ledger, rng)?;
    ledger.charge("bucket counts", eps_count)?;
    let estimate = if params.hierarchical {
        let mut out = vec![0.0; n];
        for b in &buckets {
            let h = Hierarchy::new(1, b.len(), 2, None)?;
            let levels = h.tree.levels();
            let scale = Some(levels as f64 / eps_count);
            let part = measure_hierarchy(&h, &values[b.clone()], &vec![scale; levels], rng);
            out[b.clone()].copy_from_slice(&part);
        }
        out
    } else {
        expand_uniform(&measure_buckets(buckets, &values, eps_count, rng)?)
    };
    finish(w, estimate, ledger)
}

/// Prefix sums for O(1) interval sums of squared error around the mean.
struct SseTable {
    s: Vec<f64>,
    s2: Vec<f64>,
}

impl SseTable {
    fn new(values: &[f64]) -> Self {
        let mut s = vec![0.0; values.len() + 1];
        let mut s2 = vec![0.0; values.len() + 1];
        for (i, v) in values.iter().enumerate() {
            s[i + 1] = s[i] + v;
            s2[i + 1] = s2[i] + v * v;
        }
        Self { s, s2 }
    }

    /// SSE of `[a, b)`.
    fn sse(&self, a: usize, b: usize) -> f64 {
        if b <= a {
            return 0.0;
        }
        let sum = self.s[b] - self.s[a];
        ((self.s2[b] - self.s2[a]) - sum * sum / (b - a) as f64).max(0.0)
    }
}

/// `h[t][j]`: least SSE of `values[..j]` split into `t` buckets, for
/// `t < k`, by divide and conquer over monotone split points.
fn sse_table(table: &SseTable, n: usize, k: usize) -> Vec<Vec<f64>> {
    let mut h = vec![vec![f64::INFINITY; n + 1]; k];
    h[0][0] = 0.0;
    if k > 1 {
        for j in 1..=n {
            h[1][j] = table.sse(0, j);
        }
    }
    fn solve(
        prev: &[f64],
        cur: &mut [f64],
        table: &SseTable,
        lo: usize,
        hi: usize,
        opt_lo: usize,
        opt_hi: usize,
    ) {
        if lo > hi {
            return;
        }
        let mid = (lo + hi) / 2;
        let mut best = (f64::INFINITY, opt_lo);
        for s in opt_lo..=opt_hi.min(mid - 1) {
            let v = prev[s] + table.sse(s, mid);
            if v < best.0 {
                best = (v, s);
            }
        }
        cur[mid] = best.0;
        if mid > lo {
            solve(prev, cur, table, lo, mid - 1, opt_lo, best.1);
        }
        solve(prev, cur, table, mid + 1, hi, best.1, opt_hi);
    }
    for t in 2..k {
        let (head, tail) = h.split_at_mut(t);
        if t <= n {
            solve(&head[t - 1], &mut tail[0], table, t, n, t - 1, n - 1);
        }
    }
    h
}

/// Boundaries drawn right to left: boundary `t` is sampled with score
/// `−(h[t][j] + SSE(j, right))` and sensitivity `2F + 1`, where `F` bounds
/// any bucket count.
pub fn sf_boundaries(
    values: &[f64],
    k: usize,
    bound: f64,
    epsilon: f64,
    ledger: &mut BudgetLedger,
    rng: &mut RngStream,
) -> Result<Vec<Range<usize>>> {
    let n = values.len();
    if k == 1 {
        ledger.charge("boundaries", epsilon)?;
        return Ok(vec![0..n]);
    }
    let table = SseTable::new(values);
    let h = sse_table(&table, n, k);
    let sensitivity = 2.0 * bound.max(1.0) + 1.0;
    let shares = ledger.split_even(epsilon, k - 1)?;
    let mut right = n;
    let mut cuts = Vec::with_capacity(k - 1);
    for (i, t) in (1..k).rev().enumerate() {
        ledger.charge(format!("boundary {i}"), shares[i])?;
        // The left part keeps `t` buckets, so it needs at least `t` cells.
        let candidates: Vec<usize> = (t..right).collect();
        let scores: Vec<f64> = candidates
            .iter()
            .map(|&j| -(h[t][j] + table.sse(j, right)))
            .collect();
        let pick = exponential_mechanism(&scores, shares[i], sensitivity, rng)?;
        right = candidates[pick];
        cuts.push(right);
    }
    cuts.reverse();
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for c in cuts.into_iter().chain(std::iter::once(n)) {
        out.push(start..c);
        start = c;
    }
    Ok(out)
}

/// AHP: noisy cells, thresholding, sorted greedy clustering, then noisy
/// cluster totals spread evenly over each cluster's cells. Works on any
/// domain since clusters ignore geometry.
pub fn ahp_run(
    x: &DataVector,
    w: &Workload,
    epsilon: f64,
    rho: f64,
    eta: f64,
    rng: &mut RngStream,
) -> Result<MechanismResult> {
    let mut ledger = begin(x, w, epsilon)?;
    let estimate = ahp_estimate(x, epsilon, rho, eta, &mut ledger, rng)?;
    finish(w, estimate, ledger)
}

pub(crate) fn ahp_estimate(
    x: &DataVector,
    epsilon: f64,
    rho: f64,
    eta: f64,
    ledger: &mut BudgetLedger,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    if !(rho > 0.0 && rho < 1.0) || eta.is_nan() || eta < 0.0 {
        return Err(invalid(format!("AHP needs rho in (0, 1) and eta >= 0, got {rho}, {eta}")));
    }
    let (eps1, eps2) = ledger.split_pair(epsilon, rho)?;
    ledger.charge("cells", eps1)?;
    let noisy: Vec<f64> = x
        .counts()
        .iter()
        .map(|&c| {
            let v = c as f64 + laplace(rng, 1.0 / eps1);
            if v < eta / eps1 {
                0.0
            } else {
                v
            }
        })
        .collect();
    let groups = ahp_clusters(&noisy, eps2);
    ledger.charge("clusters", eps2)?;
    let counts: Vec<f64> = groups
        .iter()
        .map(|g| g.iter().map(|&i| x.counts()[i] as f64).sum::<f64>() + laplace(rng, 1.0 / eps2))
        .collect();
    Ok(expand_groups(&groups, &counts, noisy.len()))
}

/// Greedy clustering of cells sorted by noisy value: the next cell joins the
/// open cluster when that does not raise the cluster's expected L1 error
/// (absolute deviation plus `1/ε₂` of count noise) above keeping it apart.
pub fn ahp_clusters(noisy: &[f64], eps2: f64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..noisy.len()).collect();
    order.sort_by(|&a, &b| noisy[a].total_cmp(&noisy[b]).then(a.cmp(&b)));
    let sorted: Vec<f64> = order.iter().map(|&i| noisy[i]).collect();
    let mut prefix = vec![0.0; sorted.len() + 1];
    for (i, v) in sorted.iter().enumerate() {
        prefix[i + 1] = prefix[i] + v;
    }
    // Absolute deviation of the sorted block `[a, b)`.
    let dev = |a: usize, b: usize| -> f64 {
        let mean = (prefix[b] - prefix[a]) / (b - a) as f64;
        let m = a + sorted[a..b].partition_point(|&v| v < mean);
        let below = mean * (m - a) as f64 - (prefix[m] - prefix[a]);
        let above = (prefix[b] - prefix[m]) - mean * (b - m) as f64;
        below + above
    };
    let penalty = 1.0 / eps2;
    let mut groups = Vec::new();
    let mut start = 0;
    for end in 1..sorted.len() {
        let merged = dev(start, end + 1) + penalty;
        let apart = dev(start, end) + 2.0 * penalty;
        if merged > apart {
            groups.push(order[start..end].to_vec());
            start = end;
        }
    }
    groups.push(order[start..].to_vec());
    groups
}
