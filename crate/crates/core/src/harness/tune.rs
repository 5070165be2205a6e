//! Learning free parameters on synthetic shapes, one choice per `ε·scale`
//! bucket.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithms::{Algorithm, MwemParams};
use crate::datagen::sample_shape;
use crate::error::{invalid, Error, Result};
use crate::harness::{data_stream, run_stream, scaled_error};
use crate::model::{Shape, Workload};
use crate::params::{ParamEntry, ParamTable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneSpec {
    /// `mwem` (θ = [T]) or `ahp` (θ = [ρ, η]); the starred names are accepted too.
    pub algorithm: String,
    pub grid: Vec<Vec<f64>>,
    /// `ε·scale` products to tune for.
    pub products: Vec<f64>,
    /// Budget used for every product; the scale is `product / ε`.
    pub epsilon: f64,
    pub trials: usize,
    pub seed: u64,
}

/// The mechanism a parameter vector stands for.
pub fn instantiate(algorithm: &str, theta: &[f64]) -> Result<Algorithm> {
    match (algorithm.trim_end_matches("_star"), theta) {
        ("mwem", [t]) if *t >= 1.0 => Ok(Algorithm::Mwem(MwemParams {
            rounds: t.round() as usize,
            ..MwemParams::default()
        })),
        ("ahp", [rho, eta]) => Ok(Algorithm::Ahp { rho: *rho, eta: *eta }),
        ("mwem" | "ahp", _) => Err(invalid(format!("bad parameter vector {theta:?} for {algorithm}"))),
        _ => Err(Error::Unsupported {
            algorithm: algorithm.into(),
            reason: "no tunable parameters".into(),
        }),
    }
}

/// For every product, the grid point with the lowest mean scaled error over
/// `shapes` × `trials`. Ties go to the earlier grid point.
pub fn tune_params(spec: &TuneSpec, shapes: &[Shape], w: &Workload) -> Result<ParamTable> {
    if spec.grid.is_empty() || spec.products.is_empty() || shapes.is_empty() || spec.trials == 0 {
        return Err(invalid("tuning needs a grid, products, training shapes and trials"));
    }
    if !(spec.epsilon > 0.0) {
        return Err(invalid("tuning epsilon must be positive"));
    }
    let algs = spec
        .grid
        .iter()
        .map(|theta| instantiate(&spec.algorithm, theta))
        .collect::<Result<Vec<_>>>()?;
    let cells = w.domain().cells();
    let mut entries = Vec::new();
    for (pi, &product) in spec.products.iter().enumerate() {
        let scale = (product / spec.epsilon).round().max(1.0) as u64;
        let vectors = (0..shapes.len() * spec.trials)
            .map(|i| {
                let stream = pi * shapes.len() * spec.trials + i;
                sample_shape(&shapes[i / spec.trials], scale, &mut data_stream(spec.seed, stream))
            })
            .collect::<Result<Vec<_>>>()?;
        let means = algs
            .par_iter()
            .map(|alg| {
                let mut total = 0.0;
                for (i, x) in vectors.iter().enumerate() {
                    let r = alg.run(x, w, spec.epsilon, &mut run_stream(spec.seed, pi, i))?;
                    total += scaled_error(&r.answers, w, x)?;
                }
                Ok(total / vectors.len() as f64)
            })
            .collect::<Result<Vec<f64>>>()?;
        let best = (0..means.len()).fold(0, |b, i| if means[i] < means[b] { i } else { b });
        entries.push(ParamEntry {
            eps_scale: ParamTable::bucket(product),
            cells,
            theta: spec.grid[best].clone(),
        });
    }
    ParamTable::new(spec.algorithm.clone(), entries)
}
