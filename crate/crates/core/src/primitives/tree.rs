//! Hierarchies of noisy counts and least-squares consistency.
//!
//! A [`NoisyTree`] stores nodes in topological order (root first, children
//! after their parent). Each node covers a contiguous span of leaf
//! positions; the spans of a node's children partition the node's span.
//! Variances may be `0` (exact measurement) or `f64::INFINITY` (unmeasured).

use std::ops::Range;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    /// Half-open span of leaf positions.
    pub span: Range<usize>,
    /// Indices of the children in the node list.
    pub children: Range<usize>,
    pub depth: usize,
    /// Noisy count of the span.
    pub value: f64,
    /// Noise variance of `value`.
    pub variance: f64,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn width(&self) -> usize {
        self.span.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoisyTree {
    nodes: Vec<TreeNode>,
}

impl NoisyTree {
    pub fn from_nodes(nodes: Vec<TreeNode>) -> Result<Self> {
        let malformed = |m: String| Err(Error::MalformedTree(m));
        if nodes.is_empty() {
            return malformed("a tree needs a root".into());
        }
        if nodes[0].span.start != 0 || nodes[0].span.is_empty() {
            return malformed("the root must span [0, n) with n ≥ 1".into());
        }
        let mut parent_count = vec![0usize; nodes.len()];
        for (i, node) in nodes.iter().enumerate() {
            if node.variance.is_nan() || node.variance < 0.0 {
                return malformed(format!("node {i} has invalid variance {}", node.variance));
            }
            if node.variance.is_finite() && !node.value.is_finite() {
                return malformed(format!("node {i} has a non-finite measured value"));
            }
            if node.span.is_empty() {
                return malformed(format!("node {i} has an empty span"));
            }
            if node.is_leaf() {
                continue;
            }
            if node.children.start <= i || node.children.end > nodes.len() {
                return malformed(format!("node {i} has out-of-order children"));
            }
            let mut cursor = node.span.start;
            for c in node.children.clone() {
                parent_count[c] += 1;
                if nodes[c].span.start != cursor {
                    return malformed(format!("children of node {i} do not tile its span"));
                }
                cursor = nodes[c].span.end;
            }
            if cursor != node.span.end {
                return malformed(format!("children of node {i} do not cover its span"));
            }
        }
        if parent_count[0] != 0 || parent_count[1..].iter().any(|&c| c != 1) {
            return malformed("every non-root node needs exactly one parent".into());
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn nodes_mut(&mut self) -> &mut [TreeNode] {
        &mut self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of leaf positions covered by the root.
    pub fn positions(&self) -> usize {
        self.nodes[0].span.end
    }

    /// Deepest level plus one.
    pub fn levels(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0) + 1
    }

    /// Spreads each leaf's value uniformly over its span.
    pub fn expand_leaves(&self, node_values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.positions()];
        for (node, &v) in self.nodes.iter().zip(node_values) {
            if node.is_leaf() {
                let share = v / node.width() as f64;
                out[node.span.clone()].iter_mut().for_each(|o| *o = share);
            }
        }
        out
    }

    /// Exact (noise-free) node values for a vector of position counts.
    pub fn exact_values(&self, positions: &[f64]) -> Vec<f64> {
        let mut prefix = vec![0.0; positions.len() + 1];
        for (i, v) in positions.iter().enumerate() {
            prefix[i + 1] = prefix[i] + v;
        }
        self.nodes
            .iter()
            .map(|n| prefix[n.span.end] - prefix[n.span.start])
            .collect()
    }
}

/// A regular hierarchy over a `rows × cols` grid with `branching` parts per
/// split axis.
///
/// Node blocks are aligned to powers of `branching`; nodes that would lie
/// entirely outside the grid are dropped. Positions enumerate cells in
/// depth-first order, so the returned `order[pos]` is the row-major cell at
/// leaf position `pos`. `max_depth` caps the tree height; capped leaves cover
/// whole blocks.
#[derive(Debug, Clone)]
pub struct Hierarchy {
    pub tree: NoisyTree,
    pub order: Vec<usize>,
}

impl Hierarchy {
    pub fn new(rows: usize, cols: usize, branching: usize, max_depth: Option<usize>) -> Result<Self> {
        if branching < 2 {
            return Err(crate::error::invalid("branching factor must be at least 2"));
        }
        if rows == 0 || cols == 0 {
            return Err(crate::error::invalid("grid must be non-empty"));
        }
        let height = levels_needed(rows.max(cols), branching);
        let depth_cap = max_depth.unwrap_or(height).min(height);
        let block = |depth: usize| branching.pow((height - depth) as u32);

        struct Pending {
            row0: usize,
            col0: usize,
            depth: usize,
        }
        // Breadth-first construction gives children contiguous indices.
        let mut nodes: Vec<TreeNode> = Vec::new();
        let mut pending: Vec<Pending> = vec![Pending {
            row0: 0,
            col0: 0,
            depth: 0,
        }];
        let mut head = 0;
        let mut child_lists: Vec<Vec<usize>> = Vec::new();
        while head < pending.len() {
            let p = &pending[head];
            let (row0, col0, depth) = (p.row0, p.col0, p.depth);
            let size = block(depth);
            nodes.push(TreeNode {
                span: 0..0,
                children: 0..0,
                depth,
                value: 0.0,
                variance: f64::INFINITY,
            });
            let mut kids = Vec::new();
            if depth < depth_cap {
                let sub = size / branching;
                let row_parts = if rows > 1 { branching } else { 1 };
                let row_sub = if rows > 1 { sub } else { 1 };
                for i in 0..row_parts {
                    for j in 0..branching {
                        let (r, c) = (row0 + i * row_sub, col0 + j * sub);
                        if r < rows && c < cols {
                            kids.push(pending.len());
                            pending.push(Pending {
                                row0: r,
                                col0: c,
                                depth: depth + 1,
                            });
                        }
                    }
                }
            }
            child_lists.push(kids);
            head += 1;
        }
        for (i, kids) in child_lists.iter().enumerate() {
            if let (Some(&first), Some(&last)) = (kids.first(), kids.last()) {
                nodes[i].children = first..last + 1;
            }
        }

        // Depth-first pass assigns leaf positions and spans.
        let mut order = Vec::with_capacity(rows * cols);
        let row_extent = |depth: usize| if rows > 1 { block(depth) } else { 1 };
        let mut stack: Vec<(usize, bool)> = vec![(0, false)];
        while let Some((i, visited)) = stack.pop() {
            if visited {
                let c = nodes[i].children.clone();
                nodes[i].span = nodes[c.start].span.start..nodes[c.end - 1].span.end;
                continue;
            }
            if nodes[i].children.is_empty() {
                let p = &pending[i];
                let start = order.len();
                let size = block(p.depth);
                for r in p.row0..(p.row0 + row_extent(p.depth)).min(rows) {
                    for c in p.col0..(p.col0 + size).min(cols) {
                        order.push(r * cols + c);
                    }
                }
                nodes[i].span = start..order.len();
            } else {
                stack.push((i, true));
                for c in nodes[i].children.clone().rev() {
                    stack.push((c, false));
                }
            }
        }
        let tree = NoisyTree::from_nodes(nodes)?;
        Ok(Self { tree, order })
    }

    /// Reorders a row-major cell vector into leaf-position order.
    pub fn to_positions(&self, cells: &[f64]) -> Vec<f64> {
        self.order.iter().map(|&c| cells[c]).collect()
    }

    /// Inverse of [`Hierarchy::to_positions`].
    pub fn to_cells(&self, positions: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; positions.len()];
        for (&cell, &v) in self.order.iter().zip(positions) {
            out[cell] = v;
        }
        out
    }
}

/// Smallest `h` with `branching^h ≥ n`.
pub fn levels_needed(n: usize, branching: usize) -> usize {
    let mut h = 0;
    let mut cap = 1usize;
    while cap < n {
        cap = cap.saturating_mul(branching);
        h += 1;
    }
    h
}

/// Generalized least-squares node estimates satisfying parent = Σ children.
///
/// Bottom-up, each subtree's own measurements are pooled into an estimate of
/// its total; top-down, each parent's final value is distributed over its
/// children in proportion to their estimate variances. Unmeasured subtrees
/// receive a share proportional to their width.
pub fn tree_least_squares(tree: &NoisyTree) -> Vec<f64> {
    let nodes = &tree.nodes;
    let n = nodes.len();
    let mut est = vec![0.0; n];
    let mut var = vec![f64::INFINITY; n];
    let mut child_sum = vec![0.0; n];
    let mut child_var = vec![0.0; n];

    for i in (0..n).rev() {
        let node = &nodes[i];
        if node.is_leaf() {
            est[i] = if node.variance.is_finite() { node.value } else { 0.0 };
            var[i] = node.variance;
            continue;
        }
        let (s, vs) = node
            .children
            .clone()
            .fold((0.0, 0.0), |(s, v), c| (s + est[c], v + var[c]));
        child_sum[i] = s;
        child_var[i] = vs;
        let (e, v) = combine(node.value, node.variance, s, vs);
        est[i] = e;
        var[i] = v;
    }

    let mut fin = vec![0.0; n];
    fin[0] = est[0];
    for i in 0..n {
        let node = &nodes[i];
        if node.is_leaf() {
            continue;
        }
        let diff = fin[i] - child_sum[i];
        let vs = child_var[i];
        let kids = node.children.clone();
        if vs.is_finite() && vs > 0.0 {
            for c in kids {
                fin[c] = est[c] + var[c] / vs * diff;
            }
        } else {
            // Either some children carry no information (they absorb the
            // whole residual) or all children are exact.
            let absorbing: Vec<usize> = kids
                .clone()
                .filter(|&c| if vs.is_infinite() { var[c].is_infinite() } else { true })
                .collect();
            let width: usize = absorbing.iter().map(|&c| nodes[c].width()).sum();
            for c in kids {
                fin[c] = est[c];
            }
            for c in absorbing {
                fin[c] += diff * nodes[c].width() as f64 / width as f64;
            }
        }
    }
    fin
}

fn combine(z: f64, vz: f64, s: f64, vs: f64) -> (f64, f64) {
    match (vz, vs) {
        (a, b) if a.is_infinite() && b.is_infinite() => (s, f64::INFINITY),
        (a, _) if a.is_infinite() => (s, vs),
        (_, b) if b.is_infinite() => (z, vz),
        (a, b) if a == 0.0 && b == 0.0 => (0.5 * (z + s), 0.0),
        (a, _) if a == 0.0 => (z, 0.0),
        (_, b) if b == 0.0 => (s, 0.0),
        _ => {
            let (pz, ps) = (1.0 / vz, 1.0 / vs);
            ((z * pz + s * ps) / (pz + ps), 1.0 / (pz + ps))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_node(root: f64, left: f64, right: f64, leaf_var: f64) -> NoisyTree {
        NoisyTree::from_nodes(vec![
            TreeNode {
                span: 0..2,
                children: 1..3,
                depth: 0,
                value: root,
                variance: 1.0,
            },
            TreeNode {
                span: 0..1,
                children: 0..0,
                depth: 1,
                value: left,
                variance: leaf_var,
            },
            TreeNode {
                span: 1..2,
                children: 0..0,
                depth: 1,
                value: right,
                variance: leaf_var,
            },
        ])
        .unwrap()
    }

    #[test]
    fn hand_example() {
        let fin = tree_least_squares(&three_node(10.0, 3.0, 5.0, 1.0));
        assert!((fin[1] - 11.0 / 3.0).abs() < 1e-12);
        assert!((fin[2] - 17.0 / 3.0).abs() < 1e-12);
        assert!((fin[0] - 28.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn consistent_tree_is_a_fixed_point() {
        let fin = tree_least_squares(&three_node(8.0, 3.0, 5.0, 1.0));
        assert_eq!(fin, vec![8.0, 3.0, 5.0]);
    }

    #[test]
    fn exact_leaves_dominate() {
        let fin = tree_least_squares(&three_node(100.0, 3.0, 5.0, 0.0));
        assert_eq!(&fin[1..], &[3.0, 5.0]);
        assert_eq!(fin[0], 8.0);
    }

    #[test]
    fn unmeasured_leaves_split_the_parent_by_width() {
        let mut t = three_node(10.0, 0.0, 0.0, f64::INFINITY);
        t.nodes_mut()[0].variance = 2.0;
        assert_eq!(tree_least_squares(&t), vec![10.0, 5.0, 5.0]);
    }

    #[test]
    fn rejects_gaps_between_children() {
        let mut nodes = three_node(1.0, 1.0, 1.0, 1.0).nodes().to_vec();
        nodes[2].span = 2..3;
        nodes[0].span = 0..3;
        assert!(matches!(NoisyTree::from_nodes(nodes), Err(Error::MalformedTree(_))));
    }

    #[test]
    fn hierarchy_shapes() {
        let h = Hierarchy::new(1, 2, 2, None).unwrap();
        assert_eq!(h.tree.len(), 3);
        assert_eq!(h.tree.levels(), 2);

        let h = Hierarchy::new(1, 10, 3, None).unwrap();
        assert_eq!(h.tree.positions(), 10);
        assert_eq!(h.order, (0..10).collect::<Vec<_>>());
        assert_eq!(h.tree.levels(), 4);

        let q = Hierarchy::new(4, 4, 2, None).unwrap();
        assert_eq!(q.tree.len(), 1 + 4 + 16);
        assert_eq!(&q.order[..4], &[0, 1, 4, 5]);

        let capped = Hierarchy::new(16, 16, 2, Some(2)).unwrap();
        assert_eq!(capped.tree.levels(), 3);
        assert!(capped
            .tree
            .nodes()
            .iter()
            .filter(|n| n.is_leaf())
            .all(|n| n.width() == 16));
    }

    #[test]
    fn hierarchy_order_is_a_permutation_for_ragged_grids() {
        for (r, c, b) in [(3, 5, 2), (7, 2, 3), (1, 17, 4), (6, 6, 4)] {
            let h = Hierarchy::new(r, c, b, None).unwrap();
            let mut seen = h.order.clone();
            seen.sort_unstable();
            assert_eq!(seen, (0..r * c).collect::<Vec<_>>());
        }
    }
}
