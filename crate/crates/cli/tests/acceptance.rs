//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits non-zero if any criterion fails.

use std::path::Path;
use std::time::Instant;

use dpbench::algorithms::partition::{dyadic_intervals, exact_least_cost_partition, least_cost_partition};
use dpbench::algorithms::{Algorithm, MwemParams, ALGORITHM_NAMES};
use dpbench::datagen::{random_shape_kind, sample_shape, synth_shape, SourceDataset};
use dpbench::harness::{bonferroni_alpha, competitive_set, regret, run_stream, scaled_error, tune_params, TuneSpec};
use dpbench::model::{answer_workload, make_prefix_workload, make_random_range_workload, DataVector, Domain, Shape};
use dpbench::params::ParamTable;
use dpbench::primitives::{fourier_forward, fourier_inverse, haar_forward, haar_inverse, tree_least_squares, Hierarchy, NoisyTree, TreeNode};
use dpbench::rng::RngStream;
use dpbench_cli::commands::cmd_run;
use dpbench_cli::config::BenchConfig;
use dpbench_cli::suites::{consistency_suite, exchangeability_suite, Expectation, SuiteOptions, CONSISTENCY_FLOOR};
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

type Outcome = Result<String, String>;

fn check(cond: bool, ok: String, bad: String) -> Outcome {
    if cond {
        Ok(ok)
    } else {
        Err(bad)
    }
}

/// Mean squared prefix error of Identity against `(2/ε²)·n(n+1)/2`.
fn identity_oracle() -> Outcome {
    let n = 256;
    let eps = 0.1;
    let d = Domain::one_d(n).unwrap();
    let w = make_prefix_workload(&d).unwrap();
    let shape = synth_shape(dpbench::datagen::ShapeKind::PowerLaw { exponent: 1.0 }, &d).unwrap();
    let x = sample_shape(&shape, 100_000, &mut RngStream::new(1, 1)).unwrap();
    let truth = answer_workload(&w, &x).unwrap();
    let trials = 500;
    let total: f64 = (0..trials)
        .into_par_iter()
        .map(|t| {
            let r = Algorithm::Identity.run(&x, &w, eps, &mut run_stream(7, 0, t)).unwrap();
            r.answers.iter().zip(&truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
        })
        .sum();
    let empirical = total / trials as f64;
    let expected = 2.0 / (eps * eps) * (n * (n + 1) / 2) as f64;
    let rel = (empirical / expected - 1.0).abs();
    let msg = format!("mean squared error {empirical:.5e} vs {expected:.5e} (off by {:.2}%)", 100.0 * rel);
    check(rel <= 0.05, msg.clone(), msg)
}

fn transform_roundtrips() -> Outcome {
    let mut rng = RngStream::new(2, 2);
    let mut worst = 0.0f64;
    for n in [1usize, 2, 3, 16, 100, 255, 256, 1000, 1024] {
        let x: Vec<f64> = (0..n).map(|_| 1000.0 * (rng.uniform_open01() - 0.5)).collect();
        let h = haar_inverse(&haar_forward(&x), n);
        let f = fourier_inverse(&fourier_forward(&x));
        for i in 0..n {
            worst = worst.max((h[i] - x[i]).abs()).max((f[i] - x[i]).abs());
        }
    }
    let msg = format!("worst reconstruction error {worst:.2e}");
    check(worst <= 1e-9, msg.clone(), msg)
}

fn tree_inference() -> Outcome {
    let mut rng = RngStream::new(3, 3);
    let mut worst = 0.0f64;
    for b in [2usize, 4, 16] {
        for n in [1usize, 5, 16, 100, 777, 1024] {
            let h = Hierarchy::new(1, n, b, None).unwrap();
            let mut tree = h.tree.clone();
            for node in tree.nodes_mut() {
                node.value = 100.0 * rng.uniform_open01();
                node.variance = 0.1 + 5.0 * rng.uniform_open01();
            }
            let est = tree_least_squares(&tree);
            for (i, node) in tree.nodes().iter().enumerate() {
                if !node.is_leaf() {
                    let s: f64 = node.children.clone().map(|c| est[c]).sum();
                    worst = worst.max((s - est[i]).abs() / est[i].abs().max(1.0));
                }
            }
        }
    }
    let leaf = |span: std::ops::Range<usize>, value| TreeNode {
        span,
        children: 0..0,
        depth: 1,
        value,
        variance: 1.0,
    };
    let hand = NoisyTree::from_nodes(vec![
        TreeNode {
            span: 0..2,
            children: 1..3,
            depth: 0,
            value: 10.0,
            variance: 1.0,
        },
        leaf(0..1, 3.0),
        leaf(1..2, 5.0),
    ])
    .unwrap();
    let fin = tree_least_squares(&hand);
    let hand_ok = (fin[1] - 11.0 / 3.0).abs() < 1e-12 && (fin[2] - 17.0 / 3.0).abs() < 1e-12;
    let msg = format!("worst parent/children gap {worst:.2e}; hand leaves [{:.6}, {:.6}]", fin[1], fin[2]);
    check(worst <= 1e-9 && hand_ok, msg.clone(), msg)
}

/// Every partition of `0..n` into contiguous intervals.
fn all_partitions(n: usize) -> Vec<Vec<std::ops::Range<usize>>> {
    (0u32..1 << (n - 1))
        .map(|mask| {
            let mut out = Vec::new();
            let mut start = 0;
            for i in 0..n - 1 {
                if mask & (1 << i) != 0 {
                    out.push(start..i + 1);
                    start = i + 1;
                }
            }
            out.push(start..n);
            out
        })
        .collect()
}

/// Absolute deviation from the bucket mean, the error of a uniform bucket.
fn sae(v: &[f64]) -> f64 {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - mean).abs()).sum()
}

fn partition_oracle() -> Outcome {
    let n = 8;
    let parts = all_partitions(n);
    let dyadic = dyadic_intervals(n);
    let mut rng = RngStream::new(4, 4);
    let mut mismatches = 0;
    let mut checked = 0;
    for _ in 0..20 {
        let v: Vec<f64> = (0..n).map(|_| (rng.uniform_open01() * 30.0).floor()).collect();
        let cost = |p: &[std::ops::Range<usize>], pen: f64| p.iter().map(|r| sae(&v[r.clone()]) + pen).sum::<f64>();
        for pen in [0.5, 3.0, 10.0] {
            let best_all = parts.iter().map(|p| cost(p, pen)).fold(f64::INFINITY, f64::min);
            let dp = exact_least_cost_partition(&v, pen).unwrap();
            let best_dyadic = parts
                .iter()
                .filter(|p| p.iter().all(|r| dyadic.contains(r)))
                .map(|p| cost(p, pen))
                .fold(f64::INFINITY, f64::min);
            let candidates = dyadic.iter().map(|r| (r.clone(), sae(&v[r.clone()]))).collect();
            let dp_dyadic = least_cost_partition(n, candidates, pen).unwrap();
            checked += 2;
            if (cost(&dp, pen) - best_all).abs() > 1e-9 {
                mismatches += 1;
            }
            if (cost(&dp_dyadic, pen) - best_dyadic).abs() > 1e-9 {
                mismatches += 1;
            }
        }
    }
    let msg = format!("{mismatches} of {checked} dynamic-program optima differ from brute force");
    check(mismatches == 0, msg.clone(), msg)
}

fn exchangeability() -> Outcome {
    let rows = exchangeability_suite(&SuiteOptions { trials: 200, seed: 2014 }).map_err(|e| e.to_string())?;
    let asserted: Vec<_> = rows.iter().filter(|r| r.expected == Expectation::Pass).collect();
    let failed: Vec<String> = asserted.iter().filter(|r| !r.pass).map(|r| format!("{}@{} p={:.3e}", r.algorithm, r.domain, r.stat_a)).collect();
    let recorded: Vec<String> = rows
        .iter()
        .filter(|r| r.expected == Expectation::Record)
        .map(|r| format!("{}@{} {} (p={:.2e})", r.algorithm, r.domain, if r.pass { "pass" } else { "fail" }, r.stat_a))
        .collect();
    let msg = format!(
        "{}/{} asserted pairs pass; recorded: {}{}",
        asserted.len() - failed.len(),
        asserted.len(),
        recorded.join(", "),
        if failed.is_empty() { String::new() } else { format!("; failing: {}", failed.join(", ")) }
    );
    check(failed.is_empty(), msg.clone(), msg)
}

fn consistency() -> Outcome {
    let rows = consistency_suite(&SuiteOptions { trials: 20, seed: 2014 }).map_err(|e| e.to_string())?;
    let mut problems = Vec::new();
    for r in &rows {
        match r.expected {
            Expectation::Pass if !(r.pass && r.stat_a <= CONSISTENCY_FLOOR) => {
                problems.push(format!("{} top error {:.2e} above floor", r.algorithm, r.stat_a))
            }
            Expectation::Fail if r.stat_a < 10.0 * CONSISTENCY_FLOOR => problems.push(format!(
                "{} plateau {:.2e} is below 10x the floor",
                r.algorithm, r.stat_a
            )),
            Expectation::Fail if r.pass => problems.push(format!("{} judged consistent", r.algorithm)),
            _ => {}
        }
    }
    let plateaus: Vec<String> = rows
        .iter()
        .filter(|r| r.expected == Expectation::Fail)
        .map(|r| format!("{} {:.2e}", r.algorithm, r.stat_a))
        .collect();
    let msg = format!("plateaus: {}; {}", plateaus.join(", "), if problems.is_empty() { "all verdicts as expected".into() } else { problems.join("; ") });
    check(problems.is_empty(), msg.clone(), msg)
}

fn mwem_star_direction() -> Outcome {
    let d = Domain::one_d(256).unwrap();
    let w = make_prefix_workload(&d).unwrap();
    let powerlaw = |count: usize, rng: &mut RngStream| -> Vec<Shape> {
        (0..count)
            .map(|_| synth_shape(random_shape_kind("powerlaw", 256, rng).unwrap(), &d).unwrap())
            .collect()
    };
    let training = powerlaw(4, &mut RngStream::new(70, 0));
    let grid: Vec<Vec<f64>> = [1.0, 2.0, 5.0, 10.0, 20.0, 40.0, 70.0, 100.0, 150.0, 200.0].iter().map(|&t| vec![t]).collect();
    let products = [1e3, 1e4, 1e5, 1e6, 1e7];
    let spec = TuneSpec {
        algorithm: "mwem_star".into(),
        grid,
        products: products.to_vec(),
        epsilon: 1.0,
        trials: 3,
        seed: 71,
    };
    let table: ParamTable = tune_params(&spec, &training, &w).map_err(|e| e.to_string())?;
    let learned: Vec<String> = table.entries.iter().map(|e| format!("{:.0e}:{}", e.eps_scale, e.theta[0])).collect();
    let star = Algorithm::MwemStar { table, rho_total: 0.05 };
    let fixed = Algorithm::Mwem(MwemParams { rounds: 10, ..MwemParams::default() });
    let eval = powerlaw(4, &mut RngStream::new(72, 0));
    let mut ratios = Vec::new();
    let mut ok = true;
    for product in [1e4, 1e5, 1e6] {
        let mean = |alg: &Algorithm| -> f64 {
            let errs: Vec<f64> = (0..eval.len() * 10)
                .into_par_iter()
                .map(|i| {
                    let x = sample_shape(&eval[i / 10], product as u64, &mut RngStream::new(73, i as u64)).unwrap();
                    let r = alg.run(&x, &w, 1.0, &mut run_stream(74, i, 0)).unwrap();
                    scaled_error(&r.answers, &w, &x).unwrap()
                })
                .collect();
            errs.iter().sum::<f64>() / errs.len() as f64
        };
        let (a, b) = (mean(&star), mean(&fixed));
        let ratio = b / a;
        ok &= a <= b;
        if product == 1e6 {
            ok &= ratio > 2.0;
        }
        ratios.push(format!("{product:.0e}: {ratio:.2}"));
    }
    let msg = format!("learned T {}; MWEM(T=10)/MWEM* error ratios {}", learned.join(" "), ratios.join(", "));
    check(ok, msg.clone(), msg)
}

fn data_generator() -> Outcome {
    let src = SourceDataset::new("ramp", DataVector::from_1d((1..=64).collect()).unwrap());
    let d = Domain::one_d(64).unwrap();
    let mut rng = RngStream::new(8, 8);
    let mut exact = true;
    for i in 0..10_000u64 {
        let m = 1 + (i * 7919) % 5000;
        exact &= dpbench::datagen::generate(&src, &d, m, &mut rng).unwrap().scale() == m;
    }
    let m = 100_000u64;
    let x = dpbench::datagen::generate(&src, &d, m, &mut rng).unwrap();
    let total: f64 = (1..=64).map(f64::from).sum();
    let chi2: f64 = x
        .counts()
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let e = m as f64 * (i + 1) as f64 / total;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    let p = 1.0 - ChiSquared::new(63.0).unwrap().cdf(chi2);
    let msg = format!("10^4 draws at exact scale: {exact}; chi-square {chi2:.1} on 63 df, p = {p:.3}");
    check(exact && p >= 0.01, msg.clone(), msg)
}

fn statistics() -> Outcome {
    let s: Vec<f64> = (0..50).map(|i| 1.0 + ((i * 13) % 17) as f64 * 0.05).collect();
    let all = competitive_set(&[&s[..], &s[..], &s[..], &s[..]]).map_err(|e| e.to_string())?;
    let big: Vec<f64> = s.iter().map(|v| v * 10.0).collect();
    let some = competitive_set(&[&s[..], &big[..]]).map_err(|e| e.to_string())?;
    let r = regret(&[vec![1.0, 4.0], vec![2.0, 2.0]]).map_err(|e| e.to_string())?;
    let alpha = bonferroni_alpha(15);
    let ok = all.len() == 4
        && some == vec![0]
        && (r[0] - 1.414).abs() < 1e-3
        && (r[1] - 1.414).abs() < 1e-3
        && (alpha - 0.05 / 14.0).abs() < 1e-15;
    let msg = format!("identical: {all:?}; outlier set: {some:?}; regret [{:.3}, {:.3}]; alpha(15) = {alpha:.5}", r[0], r[1]);
    check(ok, msg.clone(), msg)
}

fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(p) = stack.pop() {
        for e in std::fs::read_dir(&p).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().display().to_string();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Outcome {
    let cfg = BenchConfig::preset("desk-1d").map_err(|e| e.to_string())?;
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    cmd_run(&cfg, Path::new("."), a.path()).map_err(|e| e.to_string())?;
    cmd_run(&cfg, Path::new("."), b.path()).map_err(|e| e.to_string())?;
    let (ta, tb) = (read_tree(a.path()), read_tree(b.path()));
    let bytes: usize = ta.iter().map(|(_, v)| v.len()).sum();
    let msg = format!("{} files, {bytes} bytes, identical: {}", ta.len(), ta == tb);
    check(ta == tb && ta.iter().any(|(n, _)| n == "summary.csv"), msg.clone(), msg)
}

fn budget_ledger() -> Outcome {
    let x1 = DataVector::from_1d((0..256).map(|i| (i * i % 97) as u64).collect()).unwrap();
    let w1 = make_prefix_workload(x1.domain()).unwrap();
    let x2 = DataVector::new(Domain::two_d(16, 16).unwrap(), (0..256).map(|i| (i % 23) as u64).collect()).unwrap();
    let w2 = make_random_range_workload(x2.domain(), 300, 5).unwrap();
    let mut runs = 0;
    let mut bad = Vec::new();
    for name in ALGORITHM_NAMES {
        let alg = Algorithm::from_name(name).unwrap();
        for (x, w) in [(&x1, &w1), (&x2, &w2)] {
            if !alg.supports(x.domain()) {
                continue;
            }
            for (k, eps) in [1e-3, 0.1, 0.7, 1.0, 2.5, 1e3].into_iter().enumerate() {
                let r = alg.run(x, w, eps, &mut RngStream::new(11, k as u64)).unwrap();
                let sum: f64 = r.ledger.stages().iter().map(|s| s.epsilon).sum();
                runs += 1;
                if sum != eps {
                    bad.push(format!("{name}@{} eps {eps}: {sum}", x.domain()));
                }
            }
        }
    }
    let msg = format!("{runs} instrumented runs, {} with stage sums != eps {}", bad.len(), bad.join(", "));
    check(bad.is_empty(), msg.clone(), msg)
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("identity analytic oracle", identity_oracle),
        ("transform roundtrips", transform_roundtrips),
        ("tree inference", tree_inference),
        ("partition oracles", partition_oracle),
        ("exchangeability suite", exchangeability),
        ("consistency suite", consistency),
        ("MWEM* improvement direction", mwem_star_direction),
        ("data generator", data_generator),
        ("statistics", statistics),
        ("determinism", determinism),
        ("budget ledger", budget_ledger),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failures = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|s| name.contains(s.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("criterion {:>2} PASS  {name}: {msg} ({secs:.1}s)", i + 1),
            Err(msg) => {
                failures += 1;
                println!("criterion {:>2} FAIL  {name}: {msg} ({secs:.1}s)", i + 1);
            }
        }
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
