//! Mechanisms whose error does not depend on the data: Identity, Privelet,
//! H, H_b and Greedy-H.

use crate::algorithms::common::{workload_intervals, IntervalSet};
use crate::algorithms::spatial::hilbert_linearize;
use crate::algorithms::{begin, finish, MechanismResult};
use crate::error::Result;
use crate::model::{DataVector, Workload};
use crate::primitives::haar::{haar_forward_2d, haar_inverse_2d, haar_support};
use crate::primitives::tree::levels_needed;
use crate::primitives::{laplace, tree_least_squares, BudgetLedger, Hierarchy};
use crate::rng::RngStream;

pub fn identity_run(
    x: &DataVector,
    w: &Workload,
    epsilon: f64,
    rng: &mut RngStream,
) -> Result<MechanismResult> {
    let mut ledger = begin(x, w, epsilon)?;
    ledger.charge("cells", epsilon)?;
    let scale = 1.0 / epsilon;
    let estimate = x.counts().iter().map(|&c| c as f64 + laplace(rng, scale)).collect();
    finish(w, estimate, ledger)
}

/// Haar-wavelet strategy; in 2D the transform is the separable product and
/// the sensitivity is the product of the per-axis sensitivities.
pub fn privelet_run(
    x: &DataVector,
    w: &Workload,
    epsilon: f64,
    rng: &mut RngStream,
) -> Result<MechanismResult> {
    let mut ledger = begin(x, w, epsilon)?;
    ledger.charge("coefficients", epsilon)?;
    let (rows, cols) = x.domain().rows_cols();
    let (pr, pc) = (rows.next_power_of_two(), cols.next_power_of_two());
    let mut grid = vec![0.0; pr * pc];
    for r in 0..rows {
        for c in 0..cols {
            grid[r * pc + c] = x.counts()[r * cols + c] as f64;
        }
    }
    haar_forward_2d(&mut grid, pr, pc);
    let scale = privelet_sensitivity(rows, cols) / epsilon;
    for i in 0..pr {
        for j in 0..pc {
            let support = (haar_support(i, pr) * haar_support(j, pc)) as f64;
            grid[i * pc + j] += laplace(rng, scale) / support.sqrt();
        }
    }
    haar_inverse_2d(&mut grid, pr, pc);
    let estimate = (0..rows)
        .flat_map(|r| (0..cols).map(move |c| (r, c)))
        .map(|(r, c)| grid[r * pc + c])
        .collect();
    finish(w, estimate, ledger)
}

/// `∏ (1 + log₂ nᵢ)` over padded axis sizes.
pub fn privelet_sensitivity(rows: usize, cols: usize) -> f64 {
    let axis = |n: usize| 1.0 + n.next_power_of_two().ilog2() as f64;
    axis(rows) * axis(cols)
}

/// Adds Laplace noise to every node whose level has a scale, runs tree
/// inference, and returns consistent leaf-position estimates.
pub(crate) fn measure_hierarchy(
    h: &Hierarchy,
    positions: &[f64],
    level_scale: &[Option<f64>],
    rng: &mut RngStream,
) -> Vec<f64> {
    let exact = h.tree.exact_values(positions);
    let mut tree = h.tree.clone();
    for (node, e) in tree.nodes_mut().iter_mut().zip(exact) {
        match level_scale[node.depth] {
            Some(b) => {
                node.value = e + laplace(rng, b);
                node.variance = 2.0 * b * b;
            }
            None => {
                node.value = 0.0;
                node.variance = f64::INFINITY;
            }
        }
    }
    let values = tree_least_squares(&tree);
    tree.expand_leaves(&values)
}

/// Uniform-budget hierarchy: every level gets an equal share of `epsilon`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn hierarchy_estimate(
    cells: &[f64],
    rows: usize,
    cols: usize,
    branching: usize,
    max_depth: Option<usize>,
    epsilon: f64,
    ledger: &mut BudgetLedger,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    let h = Hierarchy::new(rows, cols, branching, max_depth)?;
    let levels = h.tree.levels();
    let mut scales = Vec::with_capacity(levels);
    for (d, part) in ledger.split_even(epsilon, levels)?.into_iter().enumerate() {
        ledger.charge(format!("level {d}"), part)?;
        scales.push(Some(1.0 / part));
    }
    let positions = h.to_positions(cells);
    Ok(h.to_cells(&measure_hierarchy(&h, &positions, &scales, rng)))
}

pub fn h_run(
    x: &DataVector,
    w: &Workload,
    epsilon: f64,
    branching: usize,
    rng: &mut RngStream,
) -> Result<MechanismResult> {
    let mut ledger = begin(x, w, epsilon)?;
    let (rows, cols) = x.domain().rows_cols();
    let estimate =
        hierarchy_estimate(&x.to_f64(), rows, cols, branching, None, epsilon, &mut ledger, rng)?;
    finish(w, estimate, ledger)
}

pub fn hb_run(
    x: &DataVector,
    w: &Workload,
    epsilon: f64,
    rng: &mut RngStream,
) -> Result<MechanismResult> {
    let (rows, cols) = x.domain().rows_cols();
    h_run(x, w, epsilon, hb_choose_branching(rows, cols), rng)
}

/// Branching factor minimizing the average variance over all range queries
/// of a uniform-budget tree; ties go to the smaller factor.
pub fn hb_choose_branching(rows: usize, cols: usize) -> usize {
    let side = rows.max(cols);
    let mut best = (2, hb_average_variance(rows, cols, 2));
    for b in 3..=side {
        let v = hb_average_variance(rows, cols, b);
        if v < best.1 * (1.0 - 1e-12) {
            best = (b, v);
        }
    }
    best.0
}

/// Average variance of a range query under a uniform-budget `b`-ary tree, in
/// units of `2/ε²`: (levels)² × (average number of nodes in a range's
/// canonical decomposition).
///
/// A node is used by a range exactly when the range contains the node but not
/// its parent, and an interval `[l, r]` of an axis of size `a` lies inside
/// `(l + 1)(a − r)` ranges, so counts factor over axes.
pub fn hb_average_variance(rows: usize, cols: usize, b: usize) -> f64 {
    let height = levels_needed(rows.max(cols), b);
    let mut used = 0.0;
    for d in 0..=height {
        let (sr, pr) = axis_terms(rows, b, height, d, rows > 1);
        let (sc, pc) = axis_terms(cols, b, height, d, true);
        used += sr * sc - pr * pc;
    }
    let ranges = |a: usize| (a * (a + 1) / 2) as f64;
    let levels = (height + 1) as f64;
    levels * levels * used / (ranges(rows) * ranges(cols))
}

/// `(Σ containing(node), Σ containing(parent(node)))` over one axis's nodes at
/// depth `d`.
fn axis_terms(a: usize, b: usize, height: usize, d: usize, split: bool) -> (f64, f64) {
    let contains = |l: usize, r: usize| ((l + 1) * (a - r)) as f64;
    if !split {
        let c = contains(0, a - 1);
        return (c, if d == 0 { 0.0 } else { c });
    }
    let size = b.pow((height - d) as u32);
    let count = a.div_ceil(size);
    let (mut own, mut parent) = (0.0, 0.0);
    for j in 0..count {
        own += contains(j * size, ((j + 1) * size).min(a) - 1);
        if d > 0 {
            let p = j / b;
            let psize = size * b;
            parent += contains(p * psize, ((p + 1) * psize).min(a) - 1);
        }
    }
    (own, parent)
}

/// Greedy-H on 1D data, or on the Hilbert linearization of 2D data.
pub fn greedyh_run(
    x: &DataVector,
    w: &Workload,
    epsilon: f64,
    branching: usize,
    rng: &mut RngStream,
) -> Result<MechanismResult> {
    let mut ledger = begin(x, w, epsilon)?;
    let estimate = if x.domain().is_1d() {
        let queries = workload_intervals(w);
        greedy_h_positions(&x.to_f64(), &queries, branching, epsilon, &mut ledger, rng)?
    } else {
        let lin = hilbert_linearize(x)?;
        let queries: Vec<IntervalSet> = w.queries().iter().map(|q| lin.query_intervals(q)).collect();
        let pos = greedy_h_positions(&lin.data.to_f64(), &queries, branching, epsilon, &mut ledger, rng)?;
        lin.to_cells(&pos)
    };
    finish(w, estimate, ledger)
}

/// Workload-weighted hierarchy over positions `0..values.len()`.
pub(crate) fn greedy_h_positions(
    values: &[f64],
    queries: &[IntervalSet],
    branching: usize,
    epsilon: f64,
    ledger: &mut BudgetLedger,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    let h = Hierarchy::new(1, values.len(), branching, None)?;
    let weights = greedy_weights(&h, queries);
    let total: f64 = weights.iter().sum();
    ledger.charge("hierarchy", epsilon)?;
    let scales: Vec<Option<f64>> = weights
        .iter()
        .map(|&wt| (wt > 0.0).then(|| total / (epsilon * wt)))
        .collect();
    Ok(measure_hierarchy(&h, values, &scales, rng))
}

/// Per-level weights chosen by coordinate descent over a `√2`-geometric grid
/// (plus zero), minimizing the workload's analytic variance. The result is
/// scaled so the largest weight is one.
pub fn greedy_weights(h: &Hierarchy, queries: &[IntervalSet]) -> Vec<f64> {
    let usage = level_usage(h, queries);
    let levels = usage.len();
    let objective = |w: &[f64]| -> f64 {
        let total: f64 = w.iter().sum();
        if total <= 0.0 {
            return f64::INFINITY;
        }
        let mut sum = 0.0;
        for (l, row) in usage.iter().enumerate() {
            if row[l] == 0.0 {
                continue;
            }
            // An unmeasured level is answered through its first measured descendants.
            match (l..levels).find(|&m| w[m] > 0.0) {
                Some(m) => sum += row[m] / (w[m] * w[m]),
                None => return f64::INFINITY,
            }
        }
        total * total * sum
    };
    let grid: Vec<f64> = std::iter::once(0.0)
        .chain((0..=20).map(|j| 2f64.powf(-(j as f64) / 2.0)))
        .collect();
    let mut w = vec![1.0; levels];
    let mut best = objective(&w);
    for _ in 0..32 {
        let mut changed = false;
        for l in 0..levels {
            let mut keep = w[l];
            for &g in &grid {
                if g == keep {
                    continue;
                }
                w[l] = g;
                let v = objective(&w);
                if v < best * (1.0 - 1e-12) {
                    best = v;
                    keep = g;
                    changed = true;
                }
            }
            w[l] = keep;
        }
        if !changed {
            break;
        }
    }
    let max = w.iter().copied().fold(0.0, f64::max);
    w.iter().map(|v| v / max).collect()
}

/// `usage[l][m]`: over all queries, the number of depth-`m` descendants of the
/// depth-`l` nodes in each query's canonical decomposition.
fn level_usage(h: &Hierarchy, queries: &[IntervalSet]) -> Vec<Vec<f64>> {
    let nodes = h.tree.nodes();
    let levels = h.tree.levels();
    let mut used = vec![0.0; nodes.len()];
    let mut stack = Vec::new();
    for set in queries {
        stack.push(0usize);
        while let Some(i) = stack.pop() {
            let span = &nodes[i].span;
            let at = set.partition_point(|r| r.end <= span.start);
            let Some(r) = set.get(at) else { continue };
            if r.start >= span.end {
                continue;
            }
            if (r.start <= span.start && r.end >= span.end) || nodes[i].is_leaf() {
                used[i] += 1.0;
            } else {
                stack.extend(nodes[i].children.clone());
            }
        }
    }
    let mut below = vec![vec![0.0; levels]; nodes.len()];
    for i in (0..nodes.len()).rev() {
        below[i][nodes[i].depth] = 1.0;
        for c in nodes[i].children.clone() {
            for m in 0..levels {
                below[i][m] += below[c][m];
            }
        }
    }
    let mut usage = vec![vec![0.0; levels]; levels];
    for (i, node) in nodes.iter().enumerate() {
        if used[i] > 0.0 {
            for m in 0..levels {
                usage[node.depth][m] += used[i] * below[i][m];
            }
        }
    }
    usage
}
