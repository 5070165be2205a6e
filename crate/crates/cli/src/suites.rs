//! Property suites run by `dpbench check`: budget accounting,
//! exchangeability and consistency, each over the whole registry.

use dpbench::algorithms::{Algorithm, MwemParams, ALGORITHM_NAMES};
use dpbench::datagen::{synth_shape, ShapeKind};
use dpbench::harness::checks::DEFAULT_LADDER;
use dpbench::harness::{check_consistency, check_exchangeability};
use dpbench::model::{make_prefix_workload, make_random_range_workload, DataVector, Domain, Shape, Workload};
use dpbench::rng::RngStream;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// What a suite expects of one algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expectation {
    Pass,
    Fail,
    /// The verdict is reported but not asserted.
    Record,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteRow {
    pub suite: String,
    pub algorithm: String,
    pub domain: String,
    pub expected: Expectation,
    pub pass: bool,
    /// Suite-specific statistics: p-value and means, or top-rung error.
    pub stat_a: f64,
    pub stat_b: f64,
    pub stat_c: f64,
}

impl SuiteRow {
    /// False only when an asserted expectation is violated.
    pub fn ok(&self) -> bool {
        match self.expected {
            Expectation::Pass => self.pass,
            Expectation::Fail => !self.pass,
            Expectation::Record => true,
        }
    }
}

pub const SUITES: [&str; 3] = ["budget", "exchangeability", "consistency"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteOptions {
    pub trials: usize,
    pub seed: u64,
}

pub fn run_suite(name: &str, opts: &SuiteOptions) -> Result<Vec<SuiteRow>, CliError> {
    match name {
        "budget" => budget_suite(opts.seed),
        "exchangeability" => exchangeability_suite(opts),
        "consistency" => consistency_suite(opts),
        other => Err(CliError::Config(format!(
            "unknown suite {other:?}; choose one of {}",
            SUITES.join(", ")
        ))),
    }
}

fn registry() -> Vec<Algorithm> {
    ALGORITHM_NAMES
        .iter()
        .map(|n| Algorithm::from_name(n).expect("registry name"))
        .collect()
}

fn core_err(e: dpbench::Error) -> CliError {
    CliError::Config(e.to_string())
}

/// Every algorithm, on a 1D and a 2D input at several budgets, must record
/// stages adding up to exactly the requested ε.
pub fn budget_suite(seed: u64) -> Result<Vec<SuiteRow>, CliError> {
    let d1 = Domain::one_d(128).expect("positive");
    let d2 = Domain::two_d(16, 16).expect("positive");
    let x1 = DataVector::new(d1.clone(), (0..128).map(|i| (i * 31 % 17) as u64).collect()).map_err(core_err)?;
    let x2 = DataVector::new(d2.clone(), (0..256).map(|i| (i * 7 % 13) as u64).collect()).map_err(core_err)?;
    let w1 = make_prefix_workload(&d1).map_err(core_err)?;
    let w2 = make_random_range_workload(&d2, 200, seed).map_err(core_err)?;
    let mut rows = Vec::new();
    for alg in registry() {
        for (x, w) in [(&x1, &w1), (&x2, &w2)] {
            if !alg.supports(x.domain()) {
                continue;
            }
            let mut balanced = true;
            let mut worst = 0.0f64;
            for (k, eps) in [0.01, 0.1, 1.0, 3.3, 100.0].into_iter().enumerate() {
                let r = alg.run(x, w, eps, &mut RngStream::new(seed, k as u64)).map_err(core_err)?;
                let sum: f64 = r.ledger.stages().iter().map(|s| s.epsilon).sum();
                balanced &= r.ledger.is_balanced() && r.epsilon() == eps;
                worst = worst.max((sum - eps).abs() / eps);
            }
            rows.push(SuiteRow {
                suite: "budget".into(),
                algorithm: alg.name().into(),
                domain: x.domain().to_string(),
                expected: Expectation::Pass,
                pass: balanced,
                stat_a: worst,
                stat_b: 0.0,
                stat_c: 0.0,
            });
        }
    }
    Ok(rows)
}

/// Smooth two-bump shape used for the exchangeability checks.
pub fn exchangeability_shape(domain: &Domain) -> Shape {
    let (_, cols) = domain.rows_cols();
    let n = cols as f64;
    let a = synth_shape(ShapeKind::PowerLaw { exponent: 0.8 }, domain).expect("valid");
    let b = synth_shape(ShapeKind::Normal { mean: 0.6 * n, sd: 0.08 * n }, domain).expect("valid");
    let w = a.probs().iter().zip(b.probs()).map(|(p, q)| p + q).collect();
    Shape::from_weights(domain.clone(), w).expect("positive weights")
}

/// Domains, workloads and base scale for the exchangeability suite.
pub fn exchangeability_settings(seed: u64) -> Vec<(Domain, Workload)> {
    let d1 = Domain::one_d(256).expect("positive");
    let d2 = Domain::two_d(32, 32).expect("positive");
    let w1 = make_prefix_workload(&d1).expect("1D");
    let w2 = make_random_range_workload(&d2, 2000, seed).expect("positive count");
    vec![(d1, w1), (d2, w2)]
}

pub const EXCHANGE_SCALE: u64 = 10_000;
pub const EXCHANGE_EPSILON: f64 = 1.0;
pub const EXCHANGE_FACTOR: u64 = 10;
pub const EXCHANGE_ALPHA: f64 = 0.01;

pub fn exchangeability_suite(opts: &SuiteOptions) -> Result<Vec<SuiteRow>, CliError> {
    let settings = exchangeability_settings(opts.seed);
    let mut jobs = Vec::new();
    for (d, w) in &settings {
        for alg in registry() {
            if alg.supports(d) {
                jobs.push((alg, d, w));
            }
        }
    }
    jobs.par_iter()
        .map(|(alg, d, w)| {
            let shape = exchangeability_shape(d);
            let v = check_exchangeability(
                alg,
                &shape,
                w,
                EXCHANGE_SCALE,
                EXCHANGE_EPSILON,
                EXCHANGE_FACTOR,
                opts.trials,
                EXCHANGE_ALPHA,
                opts.seed,
            )
            .map_err(core_err)?;
            Ok(SuiteRow {
                suite: "exchangeability".into(),
                algorithm: alg.name().into(),
                domain: d.to_string(),
                expected: if alg.is_exchangeable() { Expectation::Pass } else { Expectation::Record },
                pass: v.pass,
                stat_a: v.test.p_two_sided,
                stat_b: v.mean_base,
                stat_c: v.mean_scaled,
            })
        })
        .collect()
}

/// 64-cell inputs on which consistency is decided.
pub mod witness {
    use super::*;

    /// `x_i = i`.
    pub fn ramp() -> DataVector {
        DataVector::from_1d((0..64).collect()).expect("non-empty")
    }

    /// `x_i = 2^(n−i)`, capped at `2^40` so counts stay exact in floating point.
    pub fn geometric() -> DataVector {
        DataVector::from_1d((0..64).map(|i| 1u64 << 40usize.saturating_sub(i)).collect()).expect("non-empty")
    }

    /// A single tall spike on a flat floor.
    pub fn spike() -> DataVector {
        DataVector::from_1d((0..64).map(|i| if i == 13 { 5000 } else { 1 }).collect()).expect("non-empty")
    }

    /// `8 × 8` grid with `x = row + 2·col`.
    pub fn grid() -> DataVector {
        let d = Domain::two_d(8, 8).expect("positive");
        DataVector::new(d, (0..64).map(|i| (i / 8 + 2 * (i % 8)) as u64).collect()).expect("64 cells")
    }
}

pub const CONSISTENCY_FLOOR: f64 = 1e-3;

/// The witness and the asserted outcome for one algorithm. Algorithms the
/// suite does not assert on run on the ramp (or grid) and are recorded.
pub fn consistency_case(alg: &Algorithm) -> (DataVector, Expectation, Algorithm) {
    let name = alg.name();
    let asserted_pass = [
        "h", "hb", "privelet", "greedyh", "identity", "efpa", "ahp", "dawa", "dpcube", "ugrid", "agrid",
    ];
    let base = if alg.supports(&Domain::one_d(64).expect("positive")) { witness::ramp() } else { witness::grid() };
    match name {
        "mwem" => (
            witness::ramp(),
            Expectation::Fail,
            Algorithm::Mwem(MwemParams { rounds: 10, ..MwemParams::default() }),
        ),
        "php" => (witness::geometric(), Expectation::Fail, alg.clone()),
        "uniform" => (witness::spike(), Expectation::Fail, alg.clone()),
        n if asserted_pass.contains(&n) => (base, Expectation::Pass, alg.clone()),
        _ => (base, Expectation::Record, alg.clone()),
    }
}

pub fn consistency_suite(opts: &SuiteOptions) -> Result<Vec<SuiteRow>, CliError> {
    registry()
        .par_iter()
        .map(|alg| {
            let (x, expected, alg) = consistency_case(alg);
            let w = if x.domain().is_1d() {
                make_prefix_workload(x.domain())
            } else {
                make_random_range_workload(x.domain(), 200, opts.seed)
            }
            .map_err(core_err)?;
            let v = check_consistency(&alg, &x, &w, &DEFAULT_LADDER, opts.trials, CONSISTENCY_FLOOR, opts.seed)
                .map_err(core_err)?;
            Ok(SuiteRow {
                suite: "consistency".into(),
                algorithm: alg.name().into(),
                domain: x.domain().to_string(),
                expected,
                pass: v.pass,
                stat_a: v.top(),
                stat_b: v.means[0],
                stat_c: v.top() / CONSISTENCY_FLOOR,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_suite_is_clean() {
        let rows = budget_suite(1).unwrap();
        assert!(rows.len() >= 30);
        for r in &rows {
            assert!(r.ok(), "{r:?}");
        }
    }

    #[test]
    fn witnesses_have_expected_shapes() {
        assert_eq!(witness::ramp().scale(), 2016);
        assert_eq!(witness::geometric().counts()[0], 1 << 40);
        assert_eq!(witness::geometric().counts()[63], 1);
        assert_eq!(witness::grid().domain(), &Domain::two_d(8, 8).unwrap());
    }

    #[test]
    fn unknown_suite_is_a_config_error() {
        let opts = SuiteOptions { trials: 2, seed: 0 };
        assert!(matches!(run_suite("speed", &opts), Err(CliError::Config(_))));
    }
}
