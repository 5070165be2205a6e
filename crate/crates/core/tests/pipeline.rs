use dpbench::algorithms::{Algorithm, ALGORITHM_NAMES};
use dpbench::datagen::{sample_shape, synth_shape, synthetic_source, ShapeKind};
use dpbench::harness::{run_stream, run_trials, scaled_error, summarize, Setting, TrialDesign};
use dpbench::model::{answer_workload, make_prefix_workload, make_random_range_workload, Domain};
use dpbench::rng::RngStream;
use rayon::prelude::*;

/// Identity's prefix error has a closed form; with enough trials the
/// empirical mean must land within three standard errors of it.
#[test]
fn identity_prefix_error_matches_closed_form() {
    let n = 256;
    let eps = 0.1;
    let d = Domain::one_d(n).unwrap();
    let w = make_prefix_workload(&d).unwrap();
    let shape = synth_shape(ShapeKind::PowerLaw { exponent: 1.0 }, &d).unwrap();
    let x = sample_shape(&shape, 100_000, &mut RngStream::new(1, 1)).unwrap();
    let truth = answer_workload(&w, &x).unwrap();
    let trials = 20_000;
    let sq: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let r = Algorithm::Identity.run(&x, &w, eps, &mut run_stream(11, 0, t)).unwrap();
            r.answers.iter().zip(&truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
        })
        .collect();
    let mean = sq.iter().sum::<f64>() / trials as f64;
    let var = sq.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
    let se = (var / trials as f64).sqrt();
    let expected = 2.0 / (eps * eps) * (n * (n + 1) / 2) as f64;
    assert!((mean - expected).abs() <= 3.0 * se, "mean {mean:.4e}, expected {expected:.4e}, se {se:.3e}");
}

#[test]
fn every_algorithm_spends_exactly_its_budget() {
    for (domain, scale) in [(Domain::one_d(128).unwrap(), 5_000), (Domain::two_d(16, 16).unwrap(), 5_000)] {
        let shape = synth_shape(ShapeKind::Normal { mean: 5.0, sd: 3.0 }, &domain).unwrap();
        let x = sample_shape(&shape, scale, &mut RngStream::new(5, 0)).unwrap();
        let w = make_random_range_workload(&domain, 200, 3).unwrap();
        for name in ALGORITHM_NAMES {
            let alg = Algorithm::from_name(name).unwrap();
            if !alg.supports(&domain) {
                continue;
            }
            for eps in [0.01, 0.5, 2.0] {
                let r = alg.run(&x, &w, eps, &mut RngStream::new(9, 1)).unwrap();
                assert!(r.ledger.is_balanced(), "{name} at ε={eps} on {domain}");
                assert_eq!(r.epsilon(), eps);
                assert_eq!(r.answers.len(), w.len());
                assert!(r.answers.iter().all(|a| a.is_finite()), "{name} produced a non-finite answer");
            }
        }
    }
}

#[test]
fn trials_are_reproducible_and_summarized() {
    let d = Domain::one_d(64).unwrap();
    let shape = synth_shape(ShapeKind::PowerLaw { exponent: 1.5 }, &d).unwrap();
    let source = synthetic_source("powerlaw", &shape, 1_000_000).unwrap();
    let w = make_prefix_workload(&d).unwrap();
    let setting = Setting {
        shape: "powerlaw".into(),
        scale: 10_000,
        domain: d.clone(),
        epsilon: 0.1,
    };
    let design = TrialDesign {
        n_vectors: 3,
        n_runs: 4,
        seed: 42,
    };
    let algs = [Algorithm::Identity, Algorithm::Uniform, Algorithm::from_name("dawa").unwrap()];
    let reports: Vec<_> = algs.iter().map(|a| run_trials(a, &source, &setting, &w, &design).unwrap()).collect();
    let again = run_trials(&algs[2], &source, &setting, &w, &design).unwrap();
    assert_eq!(reports[2], again);
    for r in &reports {
        assert_eq!(r.samples.len(), 12);
        assert!(r.failures.is_empty());
    }
    let rows = summarize(&reports).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().any(|r| r.competitive));
    let best = rows.iter().map(|r| r.mean).fold(f64::INFINITY, f64::min);
    assert!(rows.iter().filter(|r| r.mean == best).all(|r| r.competitive));
}

#[test]
fn scaled_error_of_truth_is_zero() {
    let d = Domain::two_d(8, 8).unwrap();
    let shape = synth_shape(ShapeKind::Uniform, &d).unwrap();
    let x = sample_shape(&shape, 640, &mut RngStream::new(2, 2)).unwrap();
    let w = make_random_range_workload(&d, 100, 1).unwrap();
    let truth = answer_workload(&w, &x).unwrap();
    assert_eq!(scaled_error(&truth, &w, &x).unwrap(), 0.0);
    let off: Vec<f64> = truth.iter().map(|t| t + 3.0).collect();
    let expected = (9.0 * 100.0f64).sqrt() / (640.0 * 100.0);
    assert!((scaled_error(&off, &w, &x).unwrap() - expected).abs() < 1e-15);
}
