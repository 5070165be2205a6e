//! Sequential composition of privacy budgets.
//!
//! Every allocation is rounded down to a multiple of the unit in the last
//! place of the root budget. Partial sums of such multiples are exact in
//! `f64`, so a fully spent ledger adds up to its total with no rounding.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Slack allowed when fractions are meant to sum to one.
const FRACTION_SLACK: f64 = 1e-12;

/// Splits `epsilon` into `epsilon · fractions[i]`.
///
/// When the fractions sum to one, the last part absorbs the rounding so the
/// parts add up to exactly `epsilon`.
pub fn split_budget(epsilon: f64, fractions: &[f64]) -> Result<Vec<f64>> {
    split_on_grid(epsilon, fractions, ulp(epsilon))
}

fn split_on_grid(epsilon: f64, fractions: &[f64], grid: f64) -> Result<Vec<f64>> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    if fractions.is_empty() {
        return Err(invalid("at least one fraction is required"));
    }
    if fractions.iter().any(|f| !f.is_finite() || *f < 0.0) {
        return Err(invalid("fractions must be finite and non-negative"));
    }
    let total: f64 = fractions.iter().sum();
    if total > 1.0 + FRACTION_SLACK {
        return Err(Error::CompositionViolation(total));
    }
    let quantize = |v: f64| (v / grid).floor() * grid;
    let mut parts: Vec<f64> = fractions.iter().map(|f| quantize(epsilon * f)).collect();
    if (total - 1.0).abs() <= FRACTION_SLACK {
        let head: f64 = parts[..parts.len() - 1].iter().sum();
        let last = parts.len() - 1;
        parts[last] = (epsilon - head).max(0.0);
    }
    Ok(parts)
}

fn ulp(x: f64) -> f64 {
    f64::from_bits(x.to_bits() + 1) - x
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetStage {
    pub label: String,
    pub epsilon: f64,
}

/// Records how a mechanism spends its budget, stage by stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetLedger {
    total: f64,
    grid: f64,
    spent: f64,
    stages: Vec<BudgetStage>,
}

impl BudgetLedger {
    pub fn new(total: f64) -> Self {
        Self {
            total,
            grid: ulp(total),
            spent: 0.0,
            stages: Vec::new(),
        }
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn spent(&self) -> f64 {
        self.spent
    }

    pub fn remaining(&self) -> f64 {
        self.total - self.spent
    }

    pub fn stages(&self) -> &[BudgetStage] {
        &self.stages
    }

    /// True when the recorded stages add up to exactly the total.
    pub fn is_balanced(&self) -> bool {
        self.stages.iter().map(|s| s.epsilon).sum::<f64>() == self.total
    }

    /// Splits part of this ledger's budget; see [`split_budget`].
    pub fn split(&self, epsilon: f64, fractions: &[f64]) -> Result<Vec<f64>> {
        split_on_grid(epsilon, fractions, self.grid)
    }

    /// `(ρ·ε, (1−ρ)·ε)` summing exactly to `epsilon`.
    pub fn split_pair(&self, epsilon: f64, rho: f64) -> Result<(f64, f64)> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(invalid(format!("budget ratio must lie in [0, 1], got {rho}")));
        }
        let parts = self.split(epsilon, &[rho, 1.0 - rho])?;
        Ok((parts[0], parts[1]))
    }

    /// `parts` equal shares of `epsilon` summing exactly to it.
    pub fn split_even(&self, epsilon: f64, parts: usize) -> Result<Vec<f64>> {
        if parts == 0 {
            return Err(invalid("cannot split a budget into zero parts"));
        }
        self.split(epsilon, &vec![1.0 / parts as f64; parts])
    }

    /// Records a stage spending `epsilon`.
    pub fn charge(&mut self, label: impl Into<String>, epsilon: f64) -> Result<f64> {
        if !(epsilon.is_finite() && epsilon >= 0.0) {
            return Err(invalid(format!("stage budget must be non-negative, got {epsilon}")));
        }
        let after = self.spent + epsilon;
        if after > self.total * (1.0 + FRACTION_SLACK) {
            return Err(Error::BudgetExhausted {
                requested: epsilon,
                remaining: self.remaining(),
            });
        }
        self.spent = after;
        self.stages.push(BudgetStage {
            label: label.into(),
            epsilon,
        });
        Ok(epsilon)
    }
}
