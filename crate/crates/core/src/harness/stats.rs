//! Comparisons across algorithms: Welch t-tests, competitive sets, regret
//! and the bias/variance split.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{invalid, Result};

/// Sample mean and unbiased variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchTest {
    pub t: f64,
    pub df: f64,
    /// P(T ≥ t): small when `a` has the larger mean.
    pub p_greater: f64,
    pub p_two_sided: f64,
}

/// Unequal-variance two-sample t-test of `a` against `b`. Samples with no
/// spread in either group compare exactly: equal means give p = 1, any
/// difference gives p = 0 in its direction.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(invalid("a t-test needs at least two samples per group"));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let sa = va / na;
    let sb = vb / nb;
    let se2 = sa + sb;
    if se2 <= 0.0 {
        let diff = ma - mb;
        let (t, p_greater, p_two_sided) = if diff == 0.0 {
            (0.0, 0.5, 1.0)
        } else if diff > 0.0 {
            (f64::INFINITY, 0.0, 0.0)
        } else {
            (f64::NEG_INFINITY, 1.0, 0.0)
        };
        return Ok(WelchTest {
            t,
            df: na + nb - 2.0,
            p_greater,
            p_two_sided,
        });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| invalid(format!("t distribution: {e}")))?;
    let p_greater = 1.0 - dist.cdf(t);
    let p_two_sided = (2.0 * dist.cdf(-t.abs())).min(1.0);
    Ok(WelchTest {
        t,
        df,
        p_greater,
        p_two_sided,
    })
}

/// Per-comparison level when each of `n_algs − 1` algorithms is tested
/// against the best.
pub fn bonferroni_alpha(n_algs: usize) -> f64 {
    0.05 / (n_algs.max(2) - 1) as f64
}

/// Indices of the algorithms whose errors are not significantly worse
/// than those of the lowest-mean algorithm. Ties for the lowest mean go to
/// the first.
pub fn competitive_set(samples: &[&[f64]]) -> Result<Vec<usize>> {
    if samples.len() < 2 {
        return Err(invalid("a competitive set needs at least two algorithms"));
    }
    let means: Vec<f64> = samples.iter().map(|s| mean_var(s).0).collect();
    let best = (0..means.len()).fold(0, |b, i| if means[i] < means[b] { i } else { b });
    let alpha = bonferroni_alpha(samples.len());
    let mut out = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        if i == best || welch_t_test(s, samples[best])?.p_greater >= alpha {
            out.push(i);
        }
    }
    Ok(out)
}

/// Geometric mean over settings of each algorithm's error relative to the
/// best algorithm in that setting. `errors[a][s]` is algorithm `a`'s mean
/// error in setting `s`.
pub fn regret(errors: &[Vec<f64>]) -> Result<Vec<f64>> {
    let settings = errors.first().map(Vec::len).unwrap_or(0);
    if settings == 0 || errors.iter().any(|e| e.len() != settings) {
        return Err(invalid("every algorithm needs a mean error for every setting"));
    }
    let best: Vec<f64> = (0..settings)
        .map(|s| errors.iter().map(|e| e[s]).fold(f64::INFINITY, f64::min))
        .collect();
    if let Some(s) = best.iter().position(|&b| !(b > 0.0)) {
        return Err(invalid(format!("best error in setting {s} is {}, so ratios are undefined", best[s])));
    }
    Ok(errors
        .iter()
        .map(|e| {
            let log_sum: f64 = e.iter().zip(&best).map(|(a, b)| (a / b).ln()).sum();
            (log_sum / settings as f64).exp()
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasVariance {
    /// `‖mean(ŷ) − Wx‖₂ / (s·q)`.
    pub bias: f64,
    /// Per-query sample variance of `ŷ`, averaged over queries.
    pub variance: f64,
}

/// Splits repeated answers to one workload into bias and variance terms.
pub fn bias_variance(answers: &[Vec<f64>], truth: &[f64], scale: f64) -> Result<BiasVariance> {
    if answers.len() < 2 {
        return Err(invalid("bias/variance needs at least two samples"));
    }
    if !(scale > 0.0) {
        return Err(invalid("scale must be positive"));
    }
    let q = truth.len();
    if answers.iter().any(|a| a.len() != q) {
        return Err(invalid("answer vectors must match the workload length"));
    }
    let mut bias2 = 0.0;
    let mut variance = 0.0;
    for j in 0..q {
        let col: Vec<f64> = answers.iter().map(|a| a[j]).collect();
        let (m, v) = mean_var(&col);
        bias2 += (m - truth[j]).powi(2);
        variance += v / q as f64;
    }
    Ok(BiasVariance {
        bias: bias2.sqrt() / (scale * q as f64),
        variance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn welch_matches_hand_computation() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [2.0, 4.0, 6.0, 8.0, 10.0];
        let w = welch_t_test(&a, &b).unwrap();
        // sa = 1.6667/4, sb = 10/5, se = √2.41667
        assert_relative_eq!(w.t, -3.5 / (5.0f64 / 12.0 + 2.0).sqrt(), epsilon = 1e-12);
        assert_relative_eq!(w.p_greater + (1.0 - w.p_greater), 1.0);
        assert!(w.p_two_sided < 0.1 && w.p_two_sided > 0.01);
    }

    #[test]
    fn competitive_sets() {
        let s: Vec<f64> = (0..50).map(|i| 1.0 + (i % 7) as f64 * 0.01).collect();
        let same = [&s[..], &s[..], &s[..]];
        assert_eq!(competitive_set(&same).unwrap(), vec![0, 1, 2]);
        let big: Vec<f64> = s.iter().map(|v| v * 10.0).collect();
        assert_eq!(competitive_set(&[&s[..], &big[..]]).unwrap(), vec![0]);
        let c = [3.0; 10];
        let d = [3.0; 10];
        assert_eq!(competitive_set(&[&c[..], &d[..]]).unwrap(), vec![0, 1]);
    }

    #[test]
    fn bonferroni_level() {
        assert_relative_eq!(bonferroni_alpha(15), 0.05 / 14.0);
    }

    #[test]
    fn regret_hand_example() {
        let r = regret(&[vec![1.0, 4.0], vec![2.0, 2.0]]).unwrap();
        assert_relative_eq!(r[0], 2f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(r[1], 2f64.sqrt(), epsilon = 1e-12);
        assert_eq!(regret(&[vec![3.0, 5.0]]).unwrap(), vec![1.0]);
        assert!(regret(&[vec![0.0], vec![1.0]]).is_err());
    }

    #[test]
    fn exact_answers_have_no_bias_or_variance() {
        let truth = vec![3.0, 4.0];
        let bv = bias_variance(&[truth.clone(), truth.clone()], &truth, 7.0).unwrap();
        assert_eq!((bv.bias, bv.variance), (0.0, 0.0));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn regret_is_at_least_one_and_scale_free(
                errs in prop::collection::vec(prop::collection::vec(1e-6f64..1e3, 4), 2..6),
                k in 0.1f64..100.0,
            ) {
                let r = regret(&errs).unwrap();
                prop_assert!(r.iter().all(|&v| v >= 1.0 - 1e-12));
                let scaled: Vec<Vec<f64>> = errs.iter().map(|e| e.iter().map(|v| v * k).collect()).collect();
                for (a, b) in r.iter().zip(regret(&scaled).unwrap()) {
                    prop_assert!((a - b).abs() <= 1e-9 * a);
                }
            }

            #[test]
            fn competitive_set_holds_the_lowest_mean(
                samples in prop::collection::vec(prop::collection::vec(0.0f64..10.0, 3..12), 2..5),
            ) {
                let refs: Vec<&[f64]> = samples.iter().map(Vec::as_slice).collect();
                let set = competitive_set(&refs).unwrap();
                let means: Vec<f64> = samples.iter().map(|s| mean_var(s).0).collect();
                let lowest = means.iter().cloned().fold(f64::INFINITY, f64::min);
                prop_assert!(set.iter().any(|&i| means[i] == lowest));
            }
        }
    }
}
