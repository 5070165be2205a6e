//! Property checks: scale-ε exchangeability and consistency.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithms::Algorithm;
use crate::datagen::sample_shape;
use crate::error::{invalid, Result};
use crate::harness::stats::{mean_var, welch_t_test, WelchTest};
use crate::harness::{data_stream, run_stream, scaled_error};
use crate::model::{DataVector, Shape, Workload};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExchangeabilityVerdict {
    /// Mean scaled error at `(m, ε)`.
    pub mean_base: f64,
    /// Mean scaled error at `(c·m, ε/c)`.
    pub mean_scaled: f64,
    pub test: WelchTest,
    pub alpha: f64,
    pub pass: bool,
}

/// Compares scaled errors at `(m, ε)` and `(c·m, ε/c)`. Each trial samples
/// one vector `x` of scale `m` and pairs it with `c·x`, so only the
/// mechanism's own randomness separates the two arms.
#[allow(clippy::too_many_arguments)]
pub fn check_exchangeability(
    alg: &Algorithm,
    shape: &Shape,
    w: &Workload,
    scale: u64,
    epsilon: f64,
    factor: u64,
    trials: usize,
    alpha: f64,
    seed: u64,
) -> Result<ExchangeabilityVerdict> {
    if factor == 0 || trials < 2 || scale == 0 {
        return Err(invalid("exchangeability needs c ≥ 1, m ≥ 1 and at least two trials"));
    }
    let pairs = (0..trials)
        .into_par_iter()
        .map(|t| {
            let x = sample_shape(shape, scale, &mut data_stream(seed, t))?;
            let big = x.scaled_by(factor)?;
            let a = alg.run(&x, w, epsilon, &mut run_stream(seed, t, 0))?;
            let b = alg.run(&big, w, epsilon / factor as f64, &mut run_stream(seed, t, 1))?;
            Ok((scaled_error(&a.answers, w, &x)?, scaled_error(&b.answers, w, &big)?))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let (base, scaled): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let test = welch_t_test(&base, &scaled)?;
    Ok(ExchangeabilityVerdict {
        mean_base: mean_var(&base).0,
        mean_scaled: mean_var(&scaled).0,
        test,
        alpha,
        pass: test.p_two_sided >= alpha,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyVerdict {
    pub epsilons: Vec<f64>,
    pub means: Vec<f64>,
    pub stderrs: Vec<f64>,
    pub floor: f64,
    /// Every rung is no worse than the one before, within three standard errors.
    pub non_increasing: bool,
    /// The last tenfold step in ε failed to even halve a positive error.
    pub plateau: bool,
    pub pass: bool,
}

impl ConsistencyVerdict {
    pub fn top(&self) -> f64 {
        *self.means.last().expect("ladder is non-empty")
    }
}

pub const DEFAULT_LADDER: [f64; 5] = [1.0, 10.0, 1e2, 1e3, 1e4];

/// Mean scaled error on `x` along an increasing ε ladder; passes when the
/// top rung is at most `floor`, the errors never rise beyond noise and the
/// last step still cuts the error at least in half.
pub fn check_consistency(
    alg: &Algorithm,
    x: &DataVector,
    w: &Workload,
    ladder: &[f64],
    trials: usize,
    floor: f64,
    seed: u64,
) -> Result<ConsistencyVerdict> {
    if ladder.is_empty() || ladder.windows(2).any(|p| p[1] <= p[0]) || trials == 0 {
        return Err(invalid("the ε ladder must be non-empty and increasing"));
    }
    let mut means = Vec::with_capacity(ladder.len());
    let mut stderrs = Vec::with_capacity(ladder.len());
    for (rung, &eps) in ladder.iter().enumerate() {
        let errs = (0..trials)
            .into_par_iter()
            .map(|t| {
                let r = alg.run(x, w, eps, &mut run_stream(seed, rung, t))?;
                scaled_error(&r.answers, w, x)
            })
            .collect::<Result<Vec<f64>>>()?;
        let (m, v) = mean_var(&errs);
        means.push(m);
        stderrs.push((v / trials as f64).sqrt());
    }
    let non_increasing = (1..means.len()).all(|i| {
        means[i] <= means[i - 1] + 3.0 * (stderrs[i].powi(2) + stderrs[i - 1].powi(2)).sqrt()
    });
    let top = *means.last().expect("non-empty");
    let plateau = means.len() >= 2 && top > 0.0 && top >= 0.5 * means[means.len() - 2];
    let pass = non_increasing && !plateau && top <= floor;
    Ok(ConsistencyVerdict {
        epsilons: ladder.to_vec(),
        means,
        stderrs,
        floor,
        non_increasing,
        plateau,
        pass,
    })
}
