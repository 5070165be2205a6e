//! Orthonormal Haar wavelet transform.
//!
//! Coefficient layout for a length-`N` signal (`N` a power of two):
//! index 0 holds the overall approximation, index 1 the coarsest detail, then
//! 2 coefficients for the next level, and so on up to `N/2` finest details.
//! Inputs whose length is not a power of two are zero-padded.

use std::f64::consts::FRAC_1_SQRT_2;

/// Forward transform; the output length is the padded length.
pub fn haar_forward(x: &[f64]) -> Vec<f64> {
    let n = x.len().max(1).next_power_of_two();
    let mut data = vec![0.0; n];
    data[..x.len()].copy_from_slice(x);
    forward_in_place(&mut data);
    data
}

/// Inverse transform truncated to `len` cells.
pub fn haar_inverse(coeffs: &[f64], len: usize) -> Vec<f64> {
    assert!(coeffs.len().is_power_of_two(), "coefficient count must be a power of two");
    let mut data = coeffs.to_vec();
    inverse_in_place(&mut data);
    data.truncate(len);
    data
}

pub(crate) fn forward_in_place(data: &mut [f64]) {
    let mut scratch = vec![0.0; data.len()];
    let mut len = data.len();
    while len > 1 {
        let half = len / 2;
        for i in 0..half {
            let (a, b) = (data[2 * i], data[2 * i + 1]);
            scratch[i] = (a + b) * FRAC_1_SQRT_2;
            scratch[half + i] = (a - b) * FRAC_1_SQRT_2;
        }
        data[..len].copy_from_slice(&scratch[..len]);
        len = half;
    }
}

pub(crate) fn inverse_in_place(data: &mut [f64]) {
    let mut scratch = vec![0.0; data.len()];
    let mut len = 2;
    while len <= data.len() {
        let half = len / 2;
        for i in 0..half {
            let (a, d) = (data[i], data[half + i]);
            scratch[2 * i] = (a + d) * FRAC_1_SQRT_2;
            scratch[2 * i + 1] = (a - d) * FRAC_1_SQRT_2;
        }
        data[..len].copy_from_slice(&scratch[..len]);
        len *= 2;
    }
}

/// Number of cells covered by the basis vector behind coefficient `index`.
pub fn haar_support(index: usize, padded_len: usize) -> usize {
    if index == 0 {
        padded_len
    } else {
        padded_len >> index.ilog2()
    }
}

/// Separable 2D transform (rows, then columns) of a row-major grid whose
/// sides are powers of two.
pub fn haar_forward_2d(cells: &mut [f64], rows: usize, cols: usize) {
    apply_2d(cells, rows, cols, forward_in_place);
}

pub fn haar_inverse_2d(cells: &mut [f64], rows: usize, cols: usize) {
    apply_2d(cells, rows, cols, inverse_in_place);
}

fn apply_2d(cells: &mut [f64], rows: usize, cols: usize, f: fn(&mut [f64])) {
    assert!(rows.is_power_of_two() && cols.is_power_of_two());
    assert_eq!(cells.len(), rows * cols);
    for row in cells.chunks_mut(cols) {
        f(row);
    }
    let mut column = vec![0.0; rows];
    for c in 0..cols {
        for r in 0..rows {
            column[r] = cells[r * cols + c];
        }
        f(&mut column);
        for r in 0..rows {
            cells[r * cols + c] = column[r];
        }
    }
}
