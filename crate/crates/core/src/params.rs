//! Learned parameter tables keyed by `(ε·scale, domain size)`.
//!
//! Mechanisms whose error depends on scale and ε only through their product
//! can share one parameter choice per product, so keys are decade buckets
//! of the product. Lookups fall back to the nearest domain size, then the
//! nearest bucket.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    /// Decade bucket of `ε·scale`.
    pub eps_scale: f64,
    pub cells: usize,
    pub theta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamTable {
    pub algorithm: String,
    pub entries: Vec<ParamEntry>,
}

impl ParamTable {
    pub fn new(algorithm: impl Into<String>, entries: Vec<ParamEntry>) -> Result<Self> {
        let first = entries.first().ok_or_else(|| invalid("a parameter table needs entries"))?;
        let width = first.theta.len();
        if entries.iter().any(|e| e.theta.len() != width || !(e.eps_scale > 0.0)) {
            return Err(invalid("table entries need a positive key and equal-length parameters"));
        }
        Ok(Self {
            algorithm: algorithm.into(),
            entries,
        })
    }

    /// One parameter vector for every key.
    pub fn constant(algorithm: impl Into<String>, theta: Vec<f64>) -> Self {
        Self {
            algorithm: algorithm.into(),
            entries: vec![ParamEntry {
                eps_scale: 1.0,
                cells: 1,
                theta,
            }],
        }
    }

    /// Decade bucket `10^round(log₁₀ p)`.
    pub fn bucket(eps_scale: f64) -> f64 {
        10f64.powi(eps_scale.max(f64::MIN_POSITIVE).log10().round() as i32)
    }

    pub fn lookup(&self, eps_scale: f64, cells: usize) -> &[f64] {
        let key = eps_scale.max(f64::MIN_POSITIVE).log10();
        let size = (cells.max(1) as f64).ln();
        let best = self
            .entries
            .iter()
            .min_by(|a, b| {
                let da = ((a.cells.max(1) as f64).ln() - size).abs();
                let db = ((b.cells.max(1) as f64).ln() - size).abs();
                let ka = (a.eps_scale.log10() - key).abs();
                let kb = (b.eps_scale.log10() - key).abs();
                da.total_cmp(&db).then(ka.total_cmp(&kb))
            })
            .expect("tables are never empty");
        &best.theta
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let table: Self =
            serde_json::from_str(text).map_err(|e| invalid(format!("bad parameter table: {e}")))?;
        Self::new(table.algorithm, table.entries)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn buckets_are_decades() {
        assert_eq!(ParamTable::bucket(3e4), 1e4);
        assert_eq!(ParamTable::bucket(4e5), 1e6);
    }

    #[test]
    fn nearest_entry_wins() {
        let entry = |p: f64, n: usize, t: f64| ParamEntry {
            eps_scale: p,
            cells: n,
            theta: vec![t],
        };
        let table = ParamTable::new(
            "mwem",
            vec![entry(1e3, 256, 3.0), entry(1e5, 256, 20.0), entry(1e3, 4096, 5.0)],
        )
        .unwrap();
        assert_eq!(table.lookup(2e4, 300), &[20.0][..]);
        assert_eq!(table.lookup(1e9, 2000), &[5.0][..]);
        let back = ParamTable::from_json(&table.to_json().unwrap()).unwrap();
        assert_eq!(back, table);
    }

    #[test]
    fn single_entry_answers_everything() {
        let t = ParamTable::constant("ahp", vec![0.85, 0.35]);
        assert_eq!(t.lookup(1e8, 4096), &[0.85, 0.35][..]);
    }
}
