//! MWEM: multiplicative weights driven by exponentially selected queries.

use serde::{Deserialize, Serialize};

use crate::algorithms::common::{query_cells, scale_from_ledger, ScaleInfo};
use crate::algorithms::{begin, finish, MechanismResult};
use crate::error::{invalid, Result};
use crate::model::{answer_workload, DataVector, Workload};
use crate::primitives::{exponential_mechanism, laplace, BudgetLedger};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MwemParams {
    pub rounds: usize,
    pub scale: ScaleInfo,
    /// Report the final iterate instead of the average of all iterates.
    pub last_iterate: bool,
}

impl Default for MwemParams {
    fn default() -> Self {
        Self {
            rounds: 10,
            scale: ScaleInfo::Exact,
            last_iterate: false,
        }
    }
}

pub fn mwem_run(
    x: &DataVector,
    w: &Workload,
    epsilon: f64,
    params: &MwemParams,
    rng: &mut RngStream,
) -> Result<MechanismResult> {
    if params.rounds == 0 {
        return Err(invalid("MWEM needs at least one round"));
    }
    let mut ledger = begin(x, w, epsilon)?;
    let (assumed, eps) = scale_from_ledger(x, epsilon, params.scale, &mut ledger, rng)?;
    let estimate = mwem_estimate(x, w, eps, assumed, params.rounds, params.last_iterate, &mut ledger, rng)?;
    finish(w, estimate, ledger)
}

/// The MWEM loop at a resolved scale and budget.
#[allow(clippy::too_many_arguments)]
pub(crate) fn mwem_estimate(
    x: &DataVector,
    w: &Workload,
    eps: f64,
    assumed: f64,
    rounds: usize,
    last_iterate: bool,
    ledger: &mut BudgetLedger,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    let truth = answer_workload(w, x)?;
    let n = x.domain().cells();
    let (_, cols) = x.domain().rows_cols();
    let t = rounds;
    let shares = ledger.split_even(eps, 2 * t)?;
    let mut est = vec![assumed / n as f64; n];
    let mut avg = vec![0.0; n];
    for round in 0..t {
        let (eps_sel, eps_meas) = (shares[2 * round], shares[2 * round + 1]);
        ledger.charge(format!("select {round}"), eps_sel)?;
        let current = w.evaluate(&est);
        let scores: Vec<f64> = truth.iter().zip(&current).map(|(a, b)| (a - b).abs()).collect();
        let qi = exponential_mechanism(&scores, eps_sel, 1.0, rng)?;
        ledger.charge(format!("measure {round}"), eps_meas)?;
        let measured = truth[qi] + laplace(rng, 1.0 / eps_meas);
        let factor = ((measured - current[qi]) / (2.0 * assumed)).exp();
        for c in query_cells(&w.queries()[qi], cols) {
            est[c] *= factor;
        }
        let total: f64 = est.iter().sum();
        est.iter_mut().for_each(|v| *v *= assumed / total);
        for (a, v) in avg.iter_mut().zip(&est) {
            *a += v / t as f64;
        }
    }
    Ok(if last_iterate { est } else { avg })
}
