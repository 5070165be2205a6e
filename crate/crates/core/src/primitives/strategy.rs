//! Linear-query strategies answered with Laplace noise and reconstructed by
//! least squares (the matrix mechanism).

use crate::error::{invalid, Error, Result};
use crate::primitives::laplace::add_laplace;
use crate::primitives::tree::Hierarchy;
use crate::rng::RngStream;

/// Sparse strategy rows over `n` cells, with a precomputed reconstruction
/// `(SᵀS)⁻¹`.
#[derive(Debug, Clone)]
pub struct StrategySpec {
    cells: usize,
    rows: Vec<Vec<(usize, f64)>>,
    sensitivity: f64,
    gram_inverse: Vec<f64>,
}

impl StrategySpec {
    pub fn new(cells: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        if cells == 0 || rows.is_empty() {
            return Err(invalid("a strategy needs cells and rows"));
        }
        let mut column_l1 = vec![0.0; cells];
        for row in &rows {
            for &(c, v) in row {
                if c >= cells || !v.is_finite() {
                    return Err(invalid(format!("bad strategy entry ({c}, {v})")));
                }
                column_l1[c] += v.abs();
            }
        }
        let sensitivity = column_l1.iter().copied().fold(0.0, f64::max);
        if sensitivity <= 0.0 {
            return Err(invalid("strategy sensitivity must be positive"));
        }
        let mut gram = vec![0.0; cells * cells];
        for row in &rows {
            for &(a, va) in row {
                for &(b, vb) in row {
                    gram[a * cells + b] += va * vb;
                }
            }
        }
        let gram_inverse = invert_spd(gram, cells)?;
        Ok(Self {
            cells,
            rows,
            sensitivity,
            gram_inverse,
        })
    }

    pub fn identity(cells: usize) -> Result<Self> {
        Self::new(cells, (0..cells).map(|i| vec![(i, 1.0)]).collect())
    }

    /// Unnormalized ±1 Haar rows in the coefficient order of
    /// [`crate::primitives::haar::haar_forward`]; `cells` must be a power of two.
    pub fn haar(cells: usize) -> Result<Self> {
        if !cells.is_power_of_two() {
            return Err(invalid("the Haar strategy needs a power-of-two domain"));
        }
        let mut rows = vec![(0..cells).map(|c| (c, 1.0)).collect::<Vec<_>>()];
        for index in 1..cells {
            let support = crate::primitives::haar::haar_support(index, cells);
            let offset = (index - (1usize << index.ilog2())) * support;
            let half = support / 2;
            rows.push(
                (offset..offset + support)
                    .map(|c| (c, if c < offset + half { 1.0 } else { -1.0 }))
                    .collect(),
            );
        }
        Self::new(cells, rows)
    }

    /// Every node of a regular `branching`-ary hierarchy as a row.
    pub fn hierarchical(cells: usize, branching: usize) -> Result<Self> {
        let h = Hierarchy::new(1, cells, branching, None)?;
        let rows = h
            .tree
            .nodes()
            .iter()
            .map(|n| n.span.clone().map(|p| (h.order[p], 1.0)).collect())
            .collect();
        Self::new(cells, rows)
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }

    /// Maximum column L1 norm.
    pub fn sensitivity(&self) -> f64 {
        self.sensitivity
    }

    /// `Sx`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(c, v)| v * x[c]).sum())
            .collect()
    }

    /// Least-squares cell estimates from strategy answers `y`.
    pub fn reconstruct(&self, y: &[f64]) -> Vec<f64> {
        let n = self.cells;
        let mut sty = vec![0.0; n];
        for (row, &yi) in self.rows.iter().zip(y) {
            for &(c, v) in row {
                sty[c] += v * yi;
            }
        }
        self.gram_inverse
            .chunks(n)
            .map(|g| g.iter().zip(&sty).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Variance of the reconstructed answer to linear query `q`, per unit of
    /// per-row noise variance: `qᵀ(SᵀS)⁻¹q`.
    pub fn query_variance_factor(&self, q: &[f64]) -> f64 {
        let n = self.cells;
        let gq: Vec<f64> = self
            .gram_inverse
            .chunks(n)
            .map(|g| g.iter().zip(q).map(|(a, b)| a * b).sum())
            .collect();
        gq.iter().zip(q).map(|(a, b)| a * b).sum()
    }
}

/// Answers `S` on `x` with Laplace(Δ_S/ε) noise per row and reconstructs.
pub fn run_strategy(
    strategy: &StrategySpec,
    x: &[f64],
    epsilon: f64,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    if x.len() != strategy.cells {
        return Err(invalid("data length does not match the strategy"));
    }
    let mut y = strategy.apply(x);
    add_laplace(&mut y, strategy.sensitivity, epsilon, rng)?;
    Ok(strategy.reconstruct(&y))
}

/// Inverse of a symmetric positive-definite matrix via Cholesky.
fn invert_spd(mut a: Vec<f64>, n: usize) -> Result<Vec<f64>> {
    let max_diag = (0..n).map(|i| a[i * n + i]).fold(0.0, f64::max);
    let tol = 1e-10 * max_diag.max(f64::MIN_POSITIVE);
    // Lower-triangular factor in place.
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if d <= tol {
            return Err(Error::RankDeficient(format!(
                "strategy does not determine cell {j}"
            )));
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    // Invert L (lower triangular), then form L⁻ᵀ L⁻¹.
    let mut linv = vec![0.0; n * n];
    for i in 0..n {
        linv[i * n + i] = 1.0 / a[i * n + i];
        for j in 0..i {
            let mut s = 0.0;
            for k in j..i {
                s += a[i * n + k] * linv[k * n + j];
            }
            linv[i * n + j] = -s / a[i * n + i];
        }
    }
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = 0.0;
            for k in i..n {
                s += linv[k * n + i] * linv[k * n + j];
            }
            inv[i * n + j] = s;
            inv[j * n + i] = s;
        }
    }
    Ok(inv)
}
