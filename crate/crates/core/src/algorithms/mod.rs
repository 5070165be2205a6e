//! The mechanisms, each a function from `(x, W, ε, rng)` to cell estimates,
//! workload answers and an audited budget ledger, plus [`Algorithm`], a
//! serializable registry entry for each.

pub mod common;
pub mod efpa;
pub mod independent;
pub mod mwem;
pub mod partition;
pub mod spatial;

use serde::{Deserialize, Serialize};

pub use common::{estimate_scale_side, expand_uniform, Partition, ScaleInfo};
pub use efpa::efpa_run;
pub use independent::{greedyh_run, h_run, hb_choose_branching, hb_run, identity_run, privelet_run};
pub use mwem::{mwem_run, MwemParams};
pub use partition::{
    ahp_run, dawa_partition, dawa_run, php_run, sf_run, uniform_run, SfBudgetRule, SfParams,
};
pub use spatial::{
    agrid_run, dpcube_run, hilbert_linearize, quadtree_run, ugrid_run, AgridParams, GridSpec,
    HilbertOrder,
};

use crate::error::{invalid, Error, Result};
use crate::model::{DataVector, Domain, Workload};
use crate::params::{ParamEntry, ParamTable};
use crate::primitives::BudgetLedger;
use crate::rng::RngStream;

/// Output of one mechanism run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismResult {
    /// Cell estimates `x̂`, row-major.
    pub estimate: Vec<f64>,
    /// Workload answers `ŷ = W·x̂`.
    pub answers: Vec<f64>,
    pub ledger: BudgetLedger,
}

impl MechanismResult {
    /// Total budget spent.
    pub fn epsilon(&self) -> f64 {
        self.ledger.spent()
    }
}

pub(crate) fn begin(x: &DataVector, w: &Workload, epsilon: f64) -> Result<BudgetLedger> {
    if x.domain() != w.domain() {
        return Err(Error::DomainMismatch {
            expected: w.domain().to_string(),
            found: x.domain().to_string(),
        });
    }
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(invalid(format!("epsilon must be positive and finite, got {epsilon}")));
    }
    Ok(BudgetLedger::new(epsilon))
}

pub(crate) fn finish(w: &Workload, estimate: Vec<f64>, ledger: BudgetLedger) -> Result<MechanismResult> {
    let answers = w.evaluate(&estimate);
    Ok(MechanismResult {
        estimate,
        answers,
        ledger,
    })
}

pub(crate) fn require_1d(x: &DataVector, name: &str) -> Result<()> {
    if !x.domain().is_1d() {
        return Err(Error::Unsupported {
            algorithm: name.into(),
            reason: "needs a 1D domain".into(),
        });
    }
    Ok(())
}

/// A mechanism together with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Algorithm {
    Identity,
    Privelet,
    H { branching: usize },
    Hb,
    #[serde(rename = "greedyh")]
    GreedyH { branching: usize },
    Uniform,
    Mwem(MwemParams),
    MwemStar { table: ParamTable, rho_total: f64 },
    Ahp { rho: f64, eta: f64 },
    AhpStar { table: ParamTable, rho_total: f64 },
    #[serde(rename = "dpcube")]
    DpCube { rho: f64, leaves: usize },
    Dawa { rho: f64, branching: usize },
    #[serde(rename = "quadtree")]
    QuadTree { height: usize },
    #[serde(rename = "ugrid")]
    UGrid { c: f64, scale: ScaleInfo },
    #[serde(rename = "agrid")]
    AGrid(AgridParams),
    Php { rho: f64 },
    Efpa,
    Sf(SfParams),
}

/// Registry names, in a fixed order.
pub const ALGORITHM_NAMES: &[&str] = &[
    "identity", "privelet", "h", "hb", "greedyh", "uniform", "mwem", "mwem_star", "ahp",
    "ahp_star", "dpcube", "dawa", "quadtree", "ugrid", "agrid", "php", "efpa", "sf",
];

/// Share of the budget the tuned variants spend on a noisy scale.
pub const DEFAULT_RHO_TOTAL: f64 = 0.05;

/// Built-in round counts for MWEM*, growing with `ε·scale`.
pub fn default_mwem_table() -> ParamTable {
    let rows = [(1e1, 2.0), (1e2, 2.0), (1e3, 5.0), (1e4, 10.0), (1e5, 20.0), (1e6, 40.0), (1e7, 70.0), (1e8, 100.0)];
    ParamTable::new(
        "mwem_star",
        rows.iter()
            .map(|&(p, t)| ParamEntry {
                eps_scale: p,
                cells: 256,
                theta: vec![t],
            })
            .collect(),
    )
    .expect("static table is valid")
}

impl Algorithm {
    /// The registry entry with default parameters.
    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "identity" => Algorithm::Identity,
            "privelet" => Algorithm::Privelet,
            "h" => Algorithm::H { branching: 2 },
            "hb" => Algorithm::Hb,
            "greedyh" => Algorithm::GreedyH { branching: 2 },
            "uniform" => Algorithm::Uniform,
            "mwem" => Algorithm::Mwem(MwemParams::default()),
            "mwem_star" => Algorithm::MwemStar {
                table: default_mwem_table(),
                rho_total: DEFAULT_RHO_TOTAL,
            },
            "ahp" => Algorithm::Ahp { rho: 0.85, eta: 0.35 },
            "ahp_star" => Algorithm::AhpStar {
                table: ParamTable::constant("ahp_star", vec![0.85, 0.35]),
                rho_total: DEFAULT_RHO_TOTAL,
            },
            "dpcube" => Algorithm::DpCube { rho: 0.5, leaves: 10 },
            "dawa" => Algorithm::Dawa { rho: 0.25, branching: 2 },
            "quadtree" => Algorithm::QuadTree { height: 10 },
            "ugrid" => Algorithm::UGrid {
                c: 10.0,
                scale: ScaleInfo::Exact,
            },
            "agrid" => Algorithm::AGrid(AgridParams::default()),
            "php" => Algorithm::Php { rho: 0.5 },
            "efpa" => Algorithm::Efpa,
            "sf" => Algorithm::Sf(SfParams::default()),
            other => return Err(invalid(format!("unknown algorithm {other:?}"))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Identity => "identity",
            Algorithm::Privelet => "privelet",
            Algorithm::H { .. } => "h",
            Algorithm::Hb => "hb",
            Algorithm::GreedyH { .. } => "greedyh",
            Algorithm::Uniform => "uniform",
            Algorithm::Mwem(_) => "mwem",
            Algorithm::MwemStar { .. } => "mwem_star",
            Algorithm::Ahp { .. } => "ahp",
            Algorithm::AhpStar { .. } => "ahp_star",
            Algorithm::DpCube { .. } => "dpcube",
            Algorithm::Dawa { .. } => "dawa",
            Algorithm::QuadTree { .. } => "quadtree",
            Algorithm::UGrid { .. } => "ugrid",
            Algorithm::AGrid(_) => "agrid",
            Algorithm::Php { .. } => "php",
            Algorithm::Efpa => "efpa",
            Algorithm::Sf(_) => "sf",
        }
    }

    pub fn supports(&self, domain: &Domain) -> bool {
        match self {
            Algorithm::Php { .. } | Algorithm::Efpa | Algorithm::Sf(_) => domain.is_1d(),
            Algorithm::QuadTree { .. } | Algorithm::UGrid { .. } | Algorithm::AGrid(_) => {
                !domain.is_1d()
            }
            _ => true,
        }
    }

    /// Whether error is expected to vanish as ε grows.
    pub fn is_consistent(&self) -> bool {
        match self {
            Algorithm::Uniform
            | Algorithm::Mwem(_)
            | Algorithm::MwemStar { .. }
            | Algorithm::Php { .. }
            | Algorithm::QuadTree { .. } => false,
            Algorithm::Sf(p) => p.hierarchical,
            _ => true,
        }
    }

    /// Whether error depends on scale and ε only through their product.
    pub fn is_exchangeable(&self) -> bool {
        !matches!(self, Algorithm::Sf(_))
    }

    pub fn is_data_independent(&self) -> bool {
        matches!(
            self,
            Algorithm::Identity
                | Algorithm::Privelet
                | Algorithm::H { .. }
                | Algorithm::Hb
                | Algorithm::GreedyH { .. }
        )
    }

    pub fn run(
        &self,
        x: &DataVector,
        w: &Workload,
        epsilon: f64,
        rng: &mut RngStream,
    ) -> Result<MechanismResult> {
        match self {
            Algorithm::Identity => identity_run(x, w, epsilon, rng),
            Algorithm::Privelet => privelet_run(x, w, epsilon, rng),
            Algorithm::H { branching } => h_run(x, w, epsilon, *branching, rng),
            Algorithm::Hb => hb_run(x, w, epsilon, rng),
            Algorithm::GreedyH { branching } => greedyh_run(x, w, epsilon, *branching, rng),
            Algorithm::Uniform => uniform_run(x, w, epsilon, rng),
            Algorithm::Mwem(p) => mwem_run(x, w, epsilon, p, rng),
            Algorithm::MwemStar { table, rho_total } => {
                let mut ledger = begin(x, w, epsilon)?;
                let info = ScaleInfo::Noisy { rho_total: *rho_total };
                let (scale, eps) = common::scale_from_ledger(x, epsilon, info, &mut ledger, rng)?;
                let rounds = table.lookup(scale * epsilon, x.domain().cells())[0].round().max(1.0);
                let est = mwem::mwem_estimate(x, w, eps, scale, rounds as usize, false, &mut ledger, rng)?;
                finish(w, est, ledger)
            }
            Algorithm::Ahp { rho, eta } => ahp_run(x, w, epsilon, *rho, *eta, rng),
            Algorithm::AhpStar { table, rho_total } => {
                let mut ledger = begin(x, w, epsilon)?;
                let info = ScaleInfo::Noisy { rho_total: *rho_total };
                let (scale, eps) = common::scale_from_ledger(x, epsilon, info, &mut ledger, rng)?;
                let theta = table.lookup(scale * epsilon, x.domain().cells());
                if theta.len() < 2 {
                    return Err(invalid("AHP* tables hold (rho, eta) pairs"));
                }
                let est = partition::ahp_estimate(x, eps, theta[0], theta[1], &mut ledger, rng)?;
                finish(w, est, ledger)
            }
            Algorithm::DpCube { rho, leaves } => dpcube_run(x, w, epsilon, *rho, *leaves, rng),
            Algorithm::Dawa { rho, branching } => dawa_run(x, w, epsilon, *rho, *branching, rng),
            Algorithm::QuadTree { height } => quadtree_run(x, w, epsilon, *height, rng),
            Algorithm::UGrid { c, scale } => ugrid_run(x, w, epsilon, *c, *scale, rng),
            Algorithm::AGrid(p) => agrid_run(x, w, epsilon, p, rng),
            Algorithm::Php { rho } => php_run(x, w, epsilon, *rho, rng),
            Algorithm::Efpa => efpa_run(x, w, epsilon, rng),
            Algorithm::Sf(p) => sf_run(x, w, epsilon, p, rng),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_prefix_workload, make_random_range_workload};

    #[test]
    fn registry_round_trips_names_and_json() {
        for name in ALGORITHM_NAMES {
            let alg = Algorithm::from_name(name).unwrap();
            assert_eq!(alg.name(), *name);
            let json = serde_json::to_string(&alg).unwrap();
            let back: Algorithm = serde_json::from_str(&json).unwrap();
            assert_eq!(back, alg);
        }
        assert!(Algorithm::from_name("hybridtree").is_err());
    }

    #[test]
    fn every_algorithm_spends_exactly_its_budget() {
        let x1 = DataVector::from_1d((0..64).map(|i| (i * 37) % 11).collect()).unwrap();
        let w1 = make_prefix_workload(x1.domain()).unwrap();
        let x2 =
            DataVector::new(Domain::two_d(8, 8).unwrap(), (0..64).map(|i| (i * 5) % 9).collect())
                .unwrap();
        let w2 = make_random_range_workload(x2.domain(), 30, 4).unwrap();
        let mut rng = RngStream::new(17, 0);
        for name in ALGORITHM_NAMES {
            let alg = Algorithm::from_name(name).unwrap();
            for (x, w) in [(&x1, &w1), (&x2, &w2)] {
                if !alg.supports(x.domain()) {
                    continue;
                }
                for eps in [0.1, 1.0, 3.7] {
                    let r = alg.run(x, w, eps, &mut rng).unwrap();
                    assert!(r.ledger.is_balanced(), "{name} at {eps}");
                    assert_eq!(r.epsilon(), eps, "{name}");
                    assert_eq!(r.answers.len(), w.len());
                    assert!(r.answers.iter().all(|a| a.is_finite()), "{name}");
                }
            }
        }
    }

    #[test]
    fn domain_mismatch_is_rejected() {
        let x = DataVector::from_1d(vec![1, 2, 3]).unwrap();
        let w = make_prefix_workload(&Domain::one_d(4).unwrap()).unwrap();
        let err = identity_run(&x, &w, 1.0, &mut RngStream::new(0, 0));
        assert!(matches!(err, Err(Error::DomainMismatch { .. })));
    }
}
