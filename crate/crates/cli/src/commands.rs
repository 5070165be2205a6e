//! The four subcommands, as library functions writing into an output
//! directory.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use dpbench::datagen::{random_shape_kind, synth_shape, SourceDataset};
use dpbench::harness::{
    read_csv, regret, run_trials, summarize, trial_rows, tune_params, write_csv, write_csv_with_header,
    Setting, SummaryRow, TrialDesign, TrialReport, TrialRow, TuneSpec,
};
use dpbench::model::Domain;
use dpbench::rng::RngStream;
use serde::{Deserialize, Serialize};

use crate::config::{load_dataset, BenchConfig};
use crate::suites::{run_suite, SuiteOptions, SuiteRow};
use crate::CliError;

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn io_err(path: &Path) -> impl Fn(dpbench::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretRow {
    pub algorithm: String,
    pub dims: usize,
    pub settings: usize,
    pub regret: f64,
}

#[derive(Debug, Default)]
pub struct RunOutput {
    pub files: Vec<PathBuf>,
    pub failures: usize,
    pub summary: Vec<SummaryRow>,
}

/// Runs every (dataset, domain, scale, ε) setting for every algorithm that
/// supports the domain, writing one trial CSV per setting, `summary.csv`
/// and `regret.csv`.
pub fn cmd_run(cfg: &BenchConfig, base_dir: &Path, out: &Path) -> Result<RunOutput, CliError> {
    cfg.require_grid()?;
    let sources: Vec<SourceDataset> = cfg.datasets.iter().map(|d| load_dataset(d, base_dir)).collect::<Result<_, _>>()?;
    for src in &sources {
        for d in &cfg.domains {
            src.project(d)
                .map_err(|e| CliError::Config(format!("dataset {:?} on domain {d}: {e}", src.name)))?;
        }
    }
    ensure_dir(&out.join("trials"))?;
    let design = |setting_id: usize| TrialDesign {
        n_vectors: cfg.vectors,
        n_runs: cfg.runs,
        seed: cfg.seed ^ ((setting_id as u64) << 20),
    };
    let mut output = RunOutput::default();
    let mut setting_id = 0;
    for src in &sources {
        for domain in &cfg.domains {
            let w = cfg
                .workload
                .build(domain, cfg.seed)
                .map_err(|e| CliError::Config(format!("workload on {domain}: {e}")))?;
            for &scale in &cfg.scales {
                for &epsilon in &cfg.epsilons {
                    let setting = Setting {
                        shape: src.name.clone(),
                        scale,
                        domain: domain.clone(),
                        epsilon,
                    };
                    let mut reports: Vec<TrialReport> = Vec::new();
                    for alg in cfg.algorithms.iter().filter(|a| a.supports(domain)) {
                        let r = run_trials(alg, src, &setting, &w, &design(setting_id))
                            .map_err(|e| CliError::Config(e.to_string()))?;
                        for f in &r.failures {
                            eprintln!(
                                "warning: {} failed on {} scale {} domain {} eps {} (vector {}, run {}): {}",
                                r.algorithm, setting.shape, scale, domain, epsilon, f.vector, f.run, f.message
                            );
                        }
                        output.failures += r.failures.len();
                        reports.push(r);
                    }
                    let rows: Vec<TrialRow> = reports.iter().flat_map(|r| trial_rows(r, cfg.runs)).collect();
                    let path = out.join("trials").join(format!("setting_{setting_id:04}.csv"));
                    write_csv_with_header(&TRIAL_HEADER, &rows, create(&path)?).map_err(io_err(&path))?;
                    output.files.push(path);
                    output.summary.extend(summarize(&reports).map_err(|e| CliError::Config(e.to_string()))?);
                    setting_id += 1;
                }
            }
        }
    }
    let path = out.join("summary.csv");
    write_csv_with_header(&SUMMARY_HEADER, &output.summary, create(&path)?).map_err(io_err(&path))?;
    output.files.push(path);
    let regrets = regret_table(&output.summary);
    let path = out.join("regret.csv");
    write_csv_with_header(&["algorithm", "dims", "settings", "regret"], &regrets, create(&path)?)
        .map_err(io_err(&path))?;
    output.files.push(path);
    Ok(output)
}

pub const TRIAL_HEADER: [&str; 7] = ["algorithm", "shape", "scale", "domain", "epsilon", "trial", "error"];
pub const SUMMARY_HEADER: [&str; 9] =
    ["algorithm", "shape", "scale", "domain", "epsilon", "mean", "p95", "stderr", "competitive"];

/// Regret per algorithm, separately for 1D and 2D settings, over the
/// algorithms with a finite mean in every setting of that dimension.
pub fn regret_table(summary: &[SummaryRow]) -> Vec<RegretRow> {
    let mut out = Vec::new();
    for dims in [1, 2] {
        let rows: Vec<&SummaryRow> = summary
            .iter()
            .filter(|r| r.domain.parse::<Domain>().map(|d| d.dims() == dims).unwrap_or(false))
            .collect();
        let mut settings: BTreeMap<(String, u64, String, String), BTreeMap<String, f64>> = BTreeMap::new();
        for r in &rows {
            settings
                .entry((r.shape.clone(), r.scale, r.domain.clone(), r.epsilon.to_string()))
                .or_default()
                .insert(r.algorithm.clone(), r.mean);
        }
        if settings.is_empty() {
            continue;
        }
        let mut algs: Vec<String> = rows.iter().map(|r| r.algorithm.clone()).collect();
        algs.sort();
        algs.dedup();
        algs.retain(|a| settings.values().all(|m| m.get(a).is_some_and(|v| v.is_finite())));
        if algs.is_empty() {
            continue;
        }
        let errors: Vec<Vec<f64>> = algs.iter().map(|a| settings.values().map(|m| m[a]).collect()).collect();
        match regret(&errors) {
            Ok(values) => out.extend(algs.iter().zip(values).map(|(a, v)| RegretRow {
                algorithm: a.clone(),
                dims,
                settings: settings.len(),
                regret: v,
            })),
            Err(e) => eprintln!("warning: no regret table for {dims}D settings: {e}"),
        }
    }
    out
}

/// Learns a parameter table on synthetic shapes and writes it as JSON.
pub fn cmd_tune(cfg: &BenchConfig, out: &Path) -> Result<PathBuf, CliError> {
    let t = cfg
        .tune
        .as_ref()
        .ok_or_else(|| CliError::Config("the config has no [tune] section".into()))?;
    let (_, cols) = t.domain.rows_cols();
    let mut rng = RngStream::new(cfg.seed, RngStream::DATA_STREAM - 1);
    let mut shapes = Vec::new();
    for family in &t.training {
        for _ in 0..t.shapes_per_family {
            let kind = random_shape_kind(family, cols, &mut rng).map_err(|e| CliError::Config(e.to_string()))?;
            shapes.push(synth_shape(kind, &t.domain).map_err(|e| CliError::Config(e.to_string()))?);
        }
    }
    let w = cfg
        .workload
        .build(&t.domain, cfg.seed)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let spec = TuneSpec {
        algorithm: t.algorithm.clone(),
        grid: t.grid.clone(),
        products: t.products.clone(),
        epsilon: t.epsilon,
        trials: t.trials,
        seed: cfg.seed,
    };
    let table = tune_params(&spec, &shapes, &w).map_err(|e| CliError::Config(e.to_string()))?;
    ensure_dir(out)?;
    let path = out.join(format!("{}_table.json", t.algorithm));
    let json = table.to_json().map_err(|e| CliError::Io(e.to_string()))?;
    std::fs::write(&path, json + "\n").map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

/// Runs a property suite and writes `check_<suite>.csv`.
pub fn cmd_check(suite: &str, opts: &SuiteOptions, out: &Path) -> Result<(Vec<SuiteRow>, PathBuf), CliError> {
    let rows = run_suite(suite, opts)?;
    ensure_dir(out)?;
    let path = out.join(format!("check_{suite}.csv"));
    write_csv(&rows, create(&path)?).map_err(io_err(&path))?;
    Ok((rows, path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleRow {
    pub algorithm: String,
    pub domain: String,
    pub epsilon: f64,
    pub scale: u64,
    pub mean_error: f64,
    pub datasets: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DotRow {
    pub algorithm: String,
    pub domain: String,
    pub epsilon: f64,
    pub scale: u64,
    pub shape: String,
    pub mean_error: f64,
    pub cross_dataset_mean: f64,
}

pub const SCALE_HEADER: [&str; 6] = ["algorithm", "domain", "epsilon", "scale", "mean_error", "datasets"];
pub const DOT_HEADER: [&str; 7] =
    ["algorithm", "domain", "epsilon", "scale", "shape", "mean_error", "cross_dataset_mean"];

/// Long-format plot data from a summary: error against scale per algorithm,
/// and one dot per dataset alongside the mean over datasets.
pub fn plot_data(summary: &[SummaryRow]) -> (Vec<ScaleRow>, Vec<DotRow>) {
    let mut groups: BTreeMap<(String, String, String, u64), Vec<&SummaryRow>> = BTreeMap::new();
    for r in summary {
        groups
            .entry((r.algorithm.clone(), r.domain.clone(), format!("{:e}", r.epsilon), r.scale))
            .or_default()
            .push(r);
    }
    let mut scale_rows = Vec::new();
    let mut dots = Vec::new();
    for ((algorithm, domain, _, scale), rows) in groups {
        let mean = rows.iter().map(|r| r.mean).sum::<f64>() / rows.len() as f64;
        let epsilon = rows[0].epsilon;
        scale_rows.push(ScaleRow {
            algorithm: algorithm.clone(),
            domain: domain.clone(),
            epsilon,
            scale,
            mean_error: mean,
            datasets: rows.len(),
        });
        for r in rows {
            dots.push(DotRow {
                algorithm: algorithm.clone(),
                domain: domain.clone(),
                epsilon,
                scale,
                shape: r.shape.clone(),
                mean_error: r.mean,
                cross_dataset_mean: mean,
            });
        }
    }
    (scale_rows, dots)
}

/// Reads a summary CSV and writes `error_vs_scale.csv` and `dataset_dots.csv`.
pub fn cmd_report(summary_path: &Path, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let file = File::open(summary_path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", summary_path.display())))?;
    let summary: Vec<SummaryRow> = read_csv(file).map_err(|e| {
        CliError::Config(format!(
            "{}: {e} (expected columns {})",
            summary_path.display(),
            SUMMARY_HEADER.join(",")
        ))
    })?;
    let (scale_rows, dots) = plot_data(&summary);
    ensure_dir(out)?;
    let a = out.join("error_vs_scale.csv");
    write_csv_with_header(&SCALE_HEADER, &scale_rows, create(&a)?).map_err(io_err(&a))?;
    let b = out.join("dataset_dots.csv");
    write_csv_with_header(&DOT_HEADER, &dots, create(&b)?).map_err(io_err(&b))?;
    Ok(vec![a, b])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(alg: &str, shape: &str, scale: u64, mean: f64) -> SummaryRow {
        SummaryRow {
            algorithm: alg.into(),
            shape: shape.into(),
            scale,
            domain: "256".into(),
            epsilon: 0.1,
            mean,
            p95: mean,
            stderr: 0.0,
            competitive: true,
        }
    }

    #[test]
    fn plot_data_groups_by_algorithm() {
        let s = vec![row("a", "x", 10, 1.0), row("a", "y", 10, 3.0), row("b", "x", 10, 5.0)];
        let (scale, dots) = plot_data(&s);
        assert_eq!(scale.len(), 2);
        assert_eq!(scale[0].mean_error, 2.0);
        assert_eq!(dots.len(), 3);
        assert!(dots.iter().filter(|d| d.algorithm == "a").all(|d| d.cross_dataset_mean == 2.0));
        assert_eq!(plot_data(&[]), (vec![], vec![]));
    }

    #[test]
    fn regret_is_split_by_dimension() {
        let s = vec![row("a", "x", 10, 1.0), row("a", "x", 100, 4.0), row("b", "x", 10, 2.0), row("b", "x", 100, 2.0)];
        let r = regret_table(&s);
        assert_eq!(r.len(), 2);
        for x in r {
            assert!((x.regret - 2f64.sqrt()).abs() < 1e-12);
            assert_eq!(x.dims, 1);
        }
    }
}
