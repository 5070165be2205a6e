//! Real orthonormal Fourier basis and top-k approximation.
//!
//! Coefficients are ordered `[dc, cos₁, sin₁, cos₂, sin₂, …, (nyquist)]`; the
//! basis is orthonormal, so the energy of dropped coefficients equals the
//! squared reconstruction error.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{invalid, Result};

/// Orthonormal real Fourier coefficients of `x`.
pub fn fourier_forward(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let root_n = (n as f64).sqrt();
    let pair = (2.0 / n as f64).sqrt();
    let mut out = vec![0.0; n];
    out[0] = buf[0].re / root_n;
    for f in 1..=(n - 1) / 2 {
        out[2 * f - 1] = pair * buf[f].re;
        out[2 * f] = -pair * buf[f].im;
    }
    if n.is_multiple_of(2) && n > 1 {
        out[n - 1] = buf[n / 2].re / root_n;
    }
    out
}

/// Inverse of [`fourier_forward`].
pub fn fourier_inverse(coeffs: &[f64]) -> Vec<f64> {
    let n = coeffs.len();
    if n == 0 {
        return Vec::new();
    }
    let root_n = (n as f64).sqrt();
    let half = (n as f64 / 2.0).sqrt();
    let mut spec = vec![Complex::new(0.0, 0.0); n];
    spec[0] = Complex::new(coeffs[0] * root_n, 0.0);
    for f in 1..=(n - 1) / 2 {
        let y = Complex::new(coeffs[2 * f - 1], -coeffs[2 * f]) * half;
        spec[f] = y;
        spec[n - f] = y.conj();
    }
    if n.is_multiple_of(2) && n > 1 {
        spec[n / 2] = Complex::new(coeffs[n - 1] * root_n, 0.0);
    }
    FftPlanner::new().plan_fft_inverse(n).process(&mut spec);
    spec.iter().map(|c| c.re / n as f64).collect()
}

/// Retained coefficients of a top-k approximation.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierApprox {
    len: usize,
    kept: Vec<(usize, f64)>,
}

impl FourierApprox {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// `(index, value)` pairs in ascending index order.
    pub fn kept(&self) -> &[(usize, f64)] {
        &self.kept
    }

    pub fn kept_mut(&mut self) -> &mut [(usize, f64)] {
        &mut self.kept
    }

    pub fn reconstruct(&self) -> Vec<f64> {
        let mut full = vec![0.0; self.len];
        for &(i, v) in &self.kept {
            full[i] = v;
        }
        fourier_inverse(&full)
    }
}

/// Coefficient indices ordered by decreasing magnitude, ties to the lower index.
pub fn magnitude_order(coeffs: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..coeffs.len()).collect();
    order.sort_by(|&a, &b| coeffs[b].abs().total_cmp(&coeffs[a].abs()).then(a.cmp(&b)));
    order
}

/// Keeps the `k` largest-magnitude coefficients of `x`.
pub fn dft_topk(x: &[f64], k: usize) -> Result<FourierApprox> {
    let n = x.len();
    if k == 0 || k > n {
        return Err(invalid(format!("k must lie in [1, {n}], got {k}")));
    }
    let coeffs = fourier_forward(x);
    let mut keep: Vec<usize> = magnitude_order(&coeffs).into_iter().take(k).collect();
    keep.sort_unstable();
    Ok(FourierApprox {
        len: n,
        kept: keep.into_iter().map(|i| (i, coeffs[i])).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn random(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = RngStream::new(seed, 0);
        (0..n).map(|_| rng.uniform_open01() * 10.0).collect()
    }

    #[test]
    fn constant_needs_one_coefficient() {
        let x = vec![3.0; 16];
        let approx = dft_topk(&x, 1).unwrap();
        assert_eq!(approx.kept()[0].0, 0);
        for v in approx.reconstruct() {
            assert!((v - 3.0).abs() < 1e-9);
        }
    }

    #[test]
    fn full_basis_roundtrip_odd_and_even() {
        for n in [1, 2, 7, 16, 33] {
            let x = random(n, n as u64);
            let back = dft_topk(&x, n).unwrap().reconstruct();
            for (a, b) in back.iter().zip(&x) {
                assert!((a - b).abs() < 1e-9, "n={n}");
            }
        }
    }

    #[test]
    fn parseval_on_dropped_tail() {
        let x = random(64, 5);
        let coeffs = fourier_forward(&x);
        let approx = dft_topk(&x, 10).unwrap();
        let kept: Vec<usize> = approx.kept().iter().map(|p| p.0).collect();
        let tail: f64 = (0..64)
            .filter(|i| !kept.contains(i))
            .map(|i| coeffs[i] * coeffs[i])
            .sum();
        let err: f64 = approx
            .reconstruct()
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        assert!((tail - err).abs() < 1e-9, "tail {tail} err {err}");
    }

    #[test]
    fn rejects_out_of_range_k() {
        assert!(dft_topk(&[1.0, 2.0], 0).is_err());
        assert!(dft_topk(&[1.0, 2.0], 3).is_err());
    }

    #[test]
    fn ties_keep_lower_index() {
        assert_eq!(magnitude_order(&[1.0, -2.0, 2.0, 0.5]), vec![1, 2, 0, 3]);
    }
}
