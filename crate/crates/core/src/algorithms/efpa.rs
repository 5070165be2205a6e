//! EFPA: a private choice of how many Fourier coefficients to keep, then
//! noisy coefficients and the inverse transform.
//!
//! Coefficients are kept in frequency order (lowest first), so the retained
//! set depends only on the private choice of `k`.

use crate::algorithms::{begin, finish, require_1d, MechanismResult};
use crate::error::Result;
use crate::model::{DataVector, Workload};
use crate::primitives::{exponential_mechanism, fourier_forward, fourier_inverse, laplace};
use crate::rng::RngStream;

/// Score of keeping the first `k` coefficients, for `k = 1..=n`:
/// `−(‖dropped‖₂ + √2·k/ε₂)`. The second term is the expected L2 norm of
/// Laplace(√k/ε₂) noise on `k` coefficients; the first is 1-Lipschitz in the
/// data, so the score has sensitivity 1.
pub fn efpa_scores(coeffs: &[f64], eps_measure: f64) -> Vec<f64> {
    let n = coeffs.len();
    let mut tail = vec![0.0; n + 1];
    for i in (0..n).rev() {
        tail[i] = tail[i + 1] + coeffs[i] * coeffs[i];
    }
    (1..=n)
        .map(|k| -(tail[k].max(0.0).sqrt() + std::f64::consts::SQRT_2 * k as f64 / eps_measure))
        .collect()
}

pub fn efpa_run(
    x: &DataVector,
    w: &Workload,
    epsilon: f64,
    rng: &mut RngStream,
) -> Result<MechanismResult> {
    require_1d(x, "efpa")?;
    let mut ledger = begin(x, w, epsilon)?;
    let (eps_select, eps_measure) = ledger.split_pair(epsilon, 0.5)?;
    let coeffs = fourier_forward(&x.to_f64());
    ledger.charge("select k", eps_select)?;
    let scores = efpa_scores(&coeffs, eps_measure);
    let k = exponential_mechanism(&scores, eps_select, 1.0, rng)? + 1;
    ledger.charge("coefficients", eps_measure)?;
    // An orthonormal transform maps a unit change in one cell to a unit-L2
    // change in coefficients, so k of them move by at most √k in L1.
    let scale = (k as f64).sqrt() / eps_measure;
    let mut kept = vec![0.0; coeffs.len()];
    for (slot, c) in kept.iter_mut().zip(&coeffs).take(k) {
        *slot = c + laplace(rng, scale);
    }
    finish(w, fourier_inverse(&kept), ledger)
}
