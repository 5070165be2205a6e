//! Laplace sampling by inverse CDF on a 53-bit uniform.

use crate::error::{invalid, Result};
use crate::rng::RngStream;

/// One draw from Laplace(0, `scale`).
pub fn laplace(rng: &mut RngStream, scale: f64) -> f64 {
    let u = rng.uniform_open01() - 0.5;
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// `len` independent draws from Laplace(0, sensitivity / epsilon).
pub fn laplace_vector(
    sensitivity: f64,
    epsilon: f64,
    len: usize,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    let scale = laplace_scale(sensitivity, epsilon)?;
    Ok((0..len).map(|_| laplace(rng, scale)).collect())
}

/// Adds Laplace(sensitivity / epsilon) noise to every value in place.
pub fn add_laplace(
    values: &mut [f64],
    sensitivity: f64,
    epsilon: f64,
    rng: &mut RngStream,
) -> Result<()> {
    let scale = laplace_scale(sensitivity, epsilon)?;
    for v in values.iter_mut() {
        *v += laplace(rng, scale);
    }
    Ok(())
}

pub fn laplace_scale(sensitivity: f64, epsilon: f64) -> Result<f64> {
    if !(sensitivity.is_finite() && sensitivity > 0.0) {
        return Err(invalid(format!("sensitivity must be positive, got {sensitivity}")));
    }
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    Ok(sensitivity / epsilon)
}

/// CDF of Laplace(0, scale).
pub fn laplace_cdf(x: f64, scale: f64) -> f64 {
    if x < 0.0 {
        0.5 * (x / scale).exp()
    } else {
        1.0 - 0.5 * (-x / scale).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_variance_match_laplace() {
        let mut rng = RngStream::new(11, 0);
        let xs = laplace_vector(2.0, 1.0, 100_000, &mut rng).unwrap();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((var - 8.0).abs() < 0.05 * 8.0, "variance {var}");
    }

    #[test]
    fn deterministic_given_stream() {
        let a = laplace_vector(1.0, 0.5, 32, &mut RngStream::new(3, 9)).unwrap();
        let b = laplace_vector(1.0, 0.5, 32, &mut RngStream::new(3, 9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_parameters() {
        let mut rng = RngStream::new(0, 0);
        assert!(laplace_vector(0.0, 1.0, 1, &mut rng).is_err());
        assert!(laplace_vector(1.0, -1.0, 1, &mut rng).is_err());
        assert!(laplace_vector(1.0, 0.0, 1, &mut rng).is_err());
    }

    #[test]
    fn kolmogorov_smirnov_against_cdf() {
        let mut rng = RngStream::new(5, 5);
        let mut xs = laplace_vector(1.0, 1.0, 100_000, &mut rng).unwrap();
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        let d = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = laplace_cdf(x, 1.0);
                (f - i as f64 / n).abs().max((i as f64 + 1.0) / n - f)
            })
            .fold(0.0, f64::max);
        // Asymptotic critical value at alpha = 0.01 is 1.628 / sqrt(n).
        assert!(d < 1.628 / n.sqrt(), "KS statistic {d}");
    }
}
