//! Two-dimensional mechanisms (QuadTree, UGrid, AGrid, DPCube) and the
//! Hilbert-curve linearization used to run 1D mechanisms on grids.

use std::collections::VecDeque;
use std::ops::Range;

use crate::algorithms::common::{runs, scale_from_ledger, IntervalSet, ScaleInfo};
use crate::algorithms::independent::hierarchy_estimate;
use crate::algorithms::{begin, finish, MechanismResult};
use crate::error::{invalid, Error, Result};
use crate::model::{DataVector, RangeQuery, Workload};
use crate::primitives::laplace;
use crate::rng::RngStream;

/// Hilbert curve over a `side × side` grid, `side` a power of two.
#[derive(Debug, Clone, PartialEq)]
pub struct HilbertOrder {
    side: usize,
    /// Row-major cell of the padded grid at each curve position.
    cells: Vec<usize>,
}

impl HilbertOrder {
    pub fn new(side: usize) -> Result<Self> {
        if !side.is_power_of_two() {
            return Err(invalid(format!("Hilbert side {side} is not a power of two")));
        }
        let cells = (0..side * side)
            .map(|d| {
                let (x, y) = d2xy(side, d);
                y * side + x
            })
            .collect();
        Ok(Self { side, cells })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    /// Padded row-major cell at curve position `pos`.
    pub fn cell_at(&self, pos: usize) -> usize {
        self.cells[pos]
    }

    /// Curve position of every padded cell.
    pub fn positions(&self) -> Vec<usize> {
        let mut out = vec![0; self.cells.len()];
        for (pos, &cell) in self.cells.iter().enumerate() {
            out[cell] = pos;
        }
        out
    }
}

fn d2xy(side: usize, d: usize) -> (usize, usize) {
    let (mut x, mut y, mut t) = (0, 0, d);
    let mut s = 1;
    while s < side {
        let rx = 1 & (t / 2);
        let ry = 1 & (t ^ rx);
        if ry == 0 {
            if rx == 1 {
                x = s - 1 - x;
                y = s - 1 - y;
            }
            std::mem::swap(&mut x, &mut y);
        }
        x += s * rx;
        y += s * ry;
        t /= 4;
        s *= 2;
    }
    (x, y)
}

/// A grid flattened along a Hilbert curve, zero-padded to a power-of-two
/// square.
#[derive(Debug, Clone)]
pub struct Linearized {
    pub data: DataVector,
    pub order: HilbertOrder,
    rows: usize,
    cols: usize,
    /// Curve position of each original cell.
    position_of: Vec<usize>,
}

impl Linearized {
    /// Original-grid cell values from curve-position values.
    pub fn to_cells(&self, positions: &[f64]) -> Vec<f64> {
        self.position_of.iter().map(|&p| positions[p]).collect()
    }

    /// A range query as runs of curve positions.
    pub fn query_intervals(&self, q: &RangeQuery) -> IntervalSet {
        let (r0, r1) = q.rows();
        let (c0, c1) = q.cols();
        let mut pos: Vec<usize> = (r0..=r1)
            .flat_map(|r| (c0..=c1).map(move |c| (r, c)))
            .map(|(r, c)| self.position_of[r * self.cols + c])
            .collect();
        pos.sort_unstable();
        runs(&pos)
    }

    pub fn rows_cols(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

pub fn hilbert_linearize(x: &DataVector) -> Result<Linearized> {
    let (rows, cols) = x.domain().rows_cols();
    let side = rows.max(cols).next_power_of_two();
    let order = HilbertOrder::new(side)?;
    let padded_pos = order.positions();
    let mut values = vec![0u64; side * side];
    let mut position_of = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let p = padded_pos[r * side + c];
            values[p] = x.counts()[r * cols + c];
            position_of.push(p);
        }
    }
    Ok(Linearized {
        data: DataVector::from_1d(values)?,
        order,
        rows,
        cols,
        position_of,
    })
}

fn require_2d(x: &DataVector, name: &str) -> Result<()> {
    if x.domain().is_1d() {
        return Err(Error::Unsupported {
            algorithm: name.into(),
            reason: "needs a 2D domain".into(),
        });
    }
    Ok(())
}

/// Quadtree of fixed maximum height with a uniform per-level budget.
pub fn quadtree_run(
    x: &DataVector,
    w: &Workload,
    epsilon: f64,
    height: usize,
    rng: &mut RngStream,
) -> Result<MechanismResult> {
    require_2d(x, "quadtree")?;
    let mut ledger = begin(x, w, epsilon)?;
    let (rows, cols) = x.domain().rows_cols();
    let estimate =
        hierarchy_estimate(&x.to_f64(), rows, cols, 2, Some(height), epsilon, &mut ledger, rng)?;
    finish(w, estimate, ledger)
}

/// Equi-width blocks along both axes.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub row_blocks: Vec<Range<usize>>,
    pub col_blocks: Vec<Range<usize>>,
}

impl GridSpec {
    /// `m × m` blocks over `rows × cols` (clamped per axis); the last
    /// block on each axis absorbs the remainder.
    pub fn equi_width(rows: Range<usize>, cols: Range<usize>, m: usize) -> Self {
        Self {
            row_blocks: axis_blocks(rows, m),
            col_blocks: axis_blocks(cols, m),
        }
    }

    /// Blocks in row-major order.
    pub fn blocks(&self) -> impl Iterator<Item = (Range<usize>, Range<usize>)> + '_ {
        self.row_blocks
            .iter()
            .flat_map(|r| self.col_blocks.iter().map(move |c| (r.clone(), c.clone())))
    }

    pub fn len(&self) -> usize {
        self.row_blocks.len() * self.col_blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn axis_blocks(axis: Range<usize>, m: usize) -> Vec<Range<usize>> {
    let len = axis.len();
    let m = m.clamp(1, len);
    let width = len / m;
    (0..m)
        .map(|i| {
            let start = axis.start + i * width;
            let end = if i + 1 == m { axis.end } else { start + width };
            start..end
        })
        .collect()
}

fn block_sum(cells: &[f64], cols: usize, rows: &Range<usize>, cs: &Range<usize>) -> f64 {
    rows.clone()
        .map(|r| cells[r * cols + cs.start..r * cols + cs.end].iter().sum::<f64>())
        .sum()
}

fn fill_block(out: &mut [f64], cols: usize, rows: &Range<usize>, cs: &Range<usize>, total: f64) {
    let share = total / (rows.len() * cs.len()) as f64;
    for r in rows.clone() {
        out[r * cols + cs.start..r * cols + cs.end].iter_mut().for_each(|v| *v = share);
    }
}

/// `max(1, round(√(N·ε/c)))`.
pub fn ugrid_side(scale: f64, epsilon: f64, c: f64) -> usize {
    ((scale * epsilon / c).max(0.0).sqrt().round() as usize).max(1)
}

pub fn ugrid_run(
    x: &DataVector,
    w: &Workload,
    epsilon: f64,
    c: f64,
    scale: ScaleInfo,
    rng: &mut RngStream,
) -> Result<MechanismResult> {
    require_2d(x, "ugrid")?;
    let mut ledger = begin(x, w, epsilon)?;
    let (assumed, eps) = scale_from_ledger(x, epsilon, scale, &mut ledger, rng)?;
    ledger.charge("grid counts", eps)?;
    let (rows, cols) = x.domain().rows_cols();
    let grid = GridSpec::equi_width(0..rows, 0..cols, ugrid_side(assumed, eps, c));
    let cells = x.to_f64();
    let mut out = vec![0.0; cells.len()];
    for (rb, cb) in grid.blocks() {
        let noisy = block_sum(&cells, cols, &rb, &cb) + laplace(rng, 1.0 / eps);
        fill_block(&mut out, cols, &rb, &cb, noisy);
    }
    finish(w, out, ledger)
}

/// `max(10, ⌈√(N·ε/c)/4⌉)`.
pub fn agrid_coarse_side(scale: f64, epsilon: f64, c: f64) -> usize {
    (((scale * epsilon / c).max(0.0).sqrt() / 4.0).ceil() as usize).max(10)
}

/// `max(1, round(√(n_c·ε₂/c₂)))`, and 1 for non-positive noisy counts.
pub fn agrid_fine_side(noisy_count: f64, eps2: f64, c2: f64) -> usize {
    if noisy_count <= 0.0 {
        return 1;
    }
    ((noisy_count * eps2 / c2).sqrt().round() as usize).max(1)
}

/// Moves `children` so their sum is the inverse-variance combination of the
/// sum and an independent measurement of the parent. Children share one
/// variance, so the correction is split evenly.
pub fn reconcile(parent: f64, parent_var: f64, children: &mut [f64], child_var: f64) {
    let k = children.len() as f64;
    let sum: f64 = children.iter().sum();
    let sum_var = k * child_var;
    let combined = (parent / parent_var + sum / sum_var) / (1.0 / parent_var + 1.0 / sum_var);
    let adjust = (combined - sum) / k;
    children.iter_mut().for_each(|c| *c += adjust);
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AgridParams {
    pub c: f64,
    pub c2: f64,
    pub rho: f64,
    pub scale: ScaleInfo,
}

impl Default for AgridParams {
    fn default() -> Self {
        Self {
            c: 10.0,
            c2: 5.0,
            rho: 0.5,
            scale: ScaleInfo::Exact,
        }
    }
}

pub fn agrid_run(
    x: &DataVector,
    w: &Workload,
    epsilon: f64,
    params: &AgridParams,
    rng: &mut RngStream,
) -> Result<MechanismResult> {
    require_2d(x, "agrid")?;
    let mut ledger = begin(x, w, epsilon)?;
    let (assumed, eps) = scale_from_ledger(x, epsilon, params.scale, &mut ledger, rng)?;
    let (eps1, eps2) = ledger.split_pair(eps, params.rho)?;
    ledger.charge("coarse counts", eps1)?;
    ledger.charge("fine counts", eps2)?;
    let (rows, cols) = x.domain().rows_cols();
    let cells = x.to_f64();
    let coarse = GridSpec::equi_width(0..rows, 0..cols, agrid_coarse_side(assumed, eps, params.c));
    let (var1, var2) = (2.0 / (eps1 * eps1), 2.0 / (eps2 * eps2));
    let mut out = vec![0.0; cells.len()];
    for (rb, cb) in coarse.blocks() {
        let noisy = block_sum(&cells, cols, &rb, &cb) + laplace(rng, 1.0 / eps1);
        let fine = GridSpec::equi_width(rb, cb, agrid_fine_side(noisy, eps2, params.c2));
        let blocks: Vec<_> = fine.blocks().collect();
        let mut counts: Vec<f64> = blocks
            .iter()
            .map(|(r, c)| block_sum(&cells, cols, r, c) + laplace(rng, 1.0 / eps2))
            .collect();
        reconcile(noisy, var1, &mut counts, var2);
        for ((r, c), total) in blocks.iter().zip(counts) {
            fill_block(&mut out, cols, r, c, total);
        }
    }
    finish(w, out, ledger)
}

/// An axis-aligned box of cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellBox {
    pub rows: Range<usize>,
    pub cols: Range<usize>,
}

/// Splits a grid into at most `leaves` boxes, breadth first. Each split cuts
/// the box along the depth's axis (rows first, falling back to the other)
/// at the lowest slice where the cumulative clamped mass reaches half.
pub fn kd_partition(noisy: &[f64], rows: usize, cols: usize, leaves: usize) -> Vec<CellBox> {
    let mass = |r: usize, c: usize| noisy[r * cols + c].max(0.0);
    let mut active: VecDeque<(CellBox, usize)> = VecDeque::new();
    active.push_back((CellBox { rows: 0..rows, cols: 0..cols }, 0));
    let mut done = Vec::new();
    while done.len() + active.len() < leaves.max(1) {
        let Some((b, depth)) = active.pop_front() else { break };
        let axes = if depth % 2 == 0 { [0, 1] } else { [1, 0] };
        let Some(axis) = axes.into_iter().find(|&a| {
            if a == 0 {
                b.rows.len() > 1
            } else {
                b.cols.len() > 1
            }
        }) else {
            done.push(b);
            continue;
        };
        let slices: Vec<f64> = if axis == 0 {
            b.rows.clone().map(|r| b.cols.clone().map(|c| mass(r, c)).sum()).collect()
        } else {
            b.cols.clone().map(|c| b.rows.clone().map(|r| mass(r, c)).sum()).collect()
        };
        let total: f64 = slices.iter().sum();
        let mut acc = 0.0;
        let mut cut = slices.len() - 2;
        for (i, s) in slices.iter().enumerate() {
            acc += s;
            if acc >= total / 2.0 {
                cut = i.min(slices.len() - 2);
                break;
            }
        }
        let (first, second) = if axis == 0 {
            let m = b.rows.start + cut + 1;
            (
                CellBox { rows: b.rows.start..m, cols: b.cols.clone() },
                CellBox { rows: m..b.rows.end, cols: b.cols.clone() },
            )
        } else {
            let m = b.cols.start + cut + 1;
            (
                CellBox { rows: b.rows.clone(), cols: b.cols.start..m },
                CellBox { rows: b.rows.clone(), cols: m..b.cols.end },
            )
        };
        active.push_back((first, depth + 1));
        active.push_back((second, depth + 1));
    }
    done.extend(active.into_iter().map(|(b, _)| b));
    done
}

/// DPCube: noisy cells, a kd partition of them, fresh noisy box totals, and
/// a least-squares merge of the two per box.
pub fn dpcube_run(
    x: &DataVector,
    w: &Workload,
    epsilon: f64,
    rho: f64,
    leaves: usize,
    rng: &mut RngStream,
) -> Result<MechanismResult> {
    let mut ledger = begin(x, w, epsilon)?;
    let (eps1, eps2) = ledger.split_pair(epsilon, rho)?;
    ledger.charge("cells", eps1)?;
    ledger.charge("boxes", eps2)?;
    let (rows, cols) = x.domain().rows_cols();
    let cells = x.to_f64();
    let mut noisy: Vec<f64> = cells.iter().map(|&c| c + laplace(rng, 1.0 / eps1)).collect();
    let boxes = kd_partition(&noisy, rows, cols, leaves);
    let (var1, var2) = (2.0 / (eps1 * eps1), 2.0 / (eps2 * eps2));
    for b in &boxes {
        let total = block_sum(&cells, cols, &b.rows, &b.cols) + laplace(rng, 1.0 / eps2);
        let idx: Vec<usize> = b
            .rows
            .clone()
            .flat_map(|r| b.cols.clone().map(move |c| r * cols + c))
            .collect();
        let mut members: Vec<f64> = idx.iter().map(|&i| noisy[i]).collect();
        reconcile(total, var2, &mut members, var1);
        for (&i, v) in idx.iter().zip(members) {
            noisy[i] = v;
        }
    }
    finish(w, noisy, ledger)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{answer_workload, make_random_range_workload, Domain};

    #[test]
    fn hilbert_small_grid() {
        let x = DataVector::new(Domain::two_d(2, 2).unwrap(), vec![1, 2, 3, 4]).unwrap();
        let lin = hilbert_linearize(&x).unwrap();
        assert_eq!(lin.data.counts().len(), 4);
        assert_eq!(lin.data.scale(), 10);
        let back = lin.to_cells(&lin.data.to_f64());
        assert_eq!(back, x.to_f64());
    }

    #[test]
    fn hilbert_steps_are_grid_neighbors() {
        let h = HilbertOrder::new(8).unwrap();
        let mut seen = [false; 64];
        for p in 0..64 {
            seen[h.cell_at(p)] = true;
            if p > 0 {
                let (a, b) = (h.cell_at(p - 1), h.cell_at(p));
                let (ar, ac) = ((a / 8) as i64, (a % 8) as i64);
                let (br, bc) = ((b / 8) as i64, (b % 8) as i64);
                assert_eq!((ar - br).abs() + (ac - bc).abs(), 1);
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn padded_linearization_round_trips() {
        let x = DataVector::new(Domain::two_d(3, 5).unwrap(), (0..15).collect()).unwrap();
        let lin = hilbert_linearize(&x).unwrap();
        assert_eq!(lin.data.counts().len(), 64);
        assert_eq!(lin.data.scale(), x.scale());
        assert_eq!(lin.to_cells(&lin.data.to_f64()), x.to_f64());
        let q = RangeQuery::two_d((1, 2), (0, 3));
        let covered: usize = lin.query_intervals(&q).iter().map(|r| r.len()).sum();
        assert_eq!(covered, 8);
    }

    #[test]
    fn grid_formulas() {
        assert_eq!(ugrid_side(1000.0, 1.0, 10.0), 10);
        assert_eq!(agrid_fine_side(-3.0, 1.0, 5.0), 1);
        assert_eq!(agrid_fine_side(125.0, 1.0, 5.0), 5);
        assert_eq!(agrid_coarse_side(100.0, 1.0, 10.0), 10);
    }

    #[test]
    fn grids_tile_exactly() {
        for (rows, cols, m) in [(7, 5, 3), (8, 8, 8), (10, 3, 4), (1, 9, 2)] {
            let g = GridSpec::equi_width(0..rows, 0..cols, m);
            let mut hits = vec![0; rows * cols];
            for (r, c) in g.blocks() {
                for i in r {
                    for j in c.clone() {
                        hits[i * cols + j] += 1;
                    }
                }
            }
            assert!(hits.iter().all(|&h| h == 1));
        }
    }

    #[test]
    fn kd_boxes_tile_the_grid() {
        let noisy: Vec<f64> = (0..35).map(|i| ((i * 13) % 7) as f64).collect();
        for leaves in [1, 2, 5, 10, 40] {
            let boxes = kd_partition(&noisy, 5, 7, leaves);
            assert!(boxes.len() <= leaves.max(1));
            let mut hits = [0; 35];
            for b in &boxes {
                for r in b.rows.clone() {
                    for c in b.cols.clone() {
                        hits[r * 7 + c] += 1;
                    }
                }
            }
            assert!(hits.iter().all(|&h| h == 1));
        }
    }

    /// Total absolute deviation inside the two halves of a split.
    fn split_cost(cells: &[f64], cols: usize, halves: [(Range<usize>, Range<usize>); 2]) -> f64 {
        halves
            .iter()
            .map(|(rs, cs)| {
                let vals: Vec<f64> = rs.clone().flat_map(|r| cs.clone().map(move |c| cells[r * cols + c])).collect();
                crate::algorithms::common::abs_dev(&vals)
            })
            .sum()
    }

    #[test]
    fn kd_split_separates_two_blocks() {
        // Row 0 holds as much mass as rows 1..4, so the median cut is also
        // the only cut leaving both halves uniform.
        let cells: Vec<f64> = (0..16).map(|i| if i < 4 { 3.0 } else { 1.0 }).collect();
        let boxes = kd_partition(&cells, 4, 4, 2);
        let mut best = (f64::INFINITY, 0);
        for cut in 1..4 {
            let cost = split_cost(&cells, 4, [(0..cut, 0..4), (cut..4, 0..4)]);
            if cost < best.0 {
                best = (cost, cut);
            }
        }
        assert_eq!(boxes[0].rows, 0..best.1);
        assert_eq!(best.0, 0.0);
    }

    #[test]
    fn quadtree_caps_leaves_at_blocks() {
        let x = DataVector::new(Domain::two_d(16, 16).unwrap(), (0..256).collect()).unwrap();
        let w = make_random_range_workload(x.domain(), 50, 1).unwrap();
        let r = quadtree_run(&x, &w, 1e9, 2, &mut RngStream::new(3, 3)).unwrap();
        // Height 2 leaves cover 4x4 blocks, so cells inside a block are equal.
        assert!((r.estimate[0] - r.estimate[3 * 16 + 3]).abs() < 1e-6);
        assert_eq!(r.ledger.stages().len(), 3);
    }

    #[test]
    fn spatial_mechanisms_balance_their_budgets() {
        let x = DataVector::new(Domain::two_d(8, 8).unwrap(), (0..64).map(|i| i % 5).collect()).unwrap();
        let w = make_random_range_workload(x.domain(), 20, 2).unwrap();
        let mut rng = RngStream::new(1, 1);
        let truth = answer_workload(&w, &x).unwrap();
        for r in [
            ugrid_run(&x, &w, 1.0, 10.0, ScaleInfo::Noisy { rho_total: 0.05 }, &mut rng).unwrap(),
            agrid_run(&x, &w, 1.0, &AgridParams::default(), &mut rng).unwrap(),
            dpcube_run(&x, &w, 1.0, 0.5, 10, &mut rng).unwrap(),
            quadtree_run(&x, &w, 1.0, 10, &mut rng).unwrap(),
        ] {
            assert!(r.ledger.is_balanced());
            assert_eq!(r.answers.len(), truth.len());
        }
    }
}
