//! Error measurement, repeated trials and their reports.

pub mod checks;
pub mod stats;
pub mod tune;

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use crate::algorithms::estimate_scale_side;
pub use crate::params::{ParamEntry, ParamTable};
pub use checks::{check_consistency, check_exchangeability, ConsistencyVerdict, ExchangeabilityVerdict};
pub use stats::{bias_variance, bonferroni_alpha, competitive_set, regret, welch_t_test, BiasVariance, WelchTest};
pub use tune::{tune_params, TuneSpec};

use crate::algorithms::Algorithm;
use crate::datagen::{sample_shape, SourceDataset};
use crate::error::{invalid, Error, Result};
use crate::model::{answer_workload, shape_of, DataVector, Domain, Workload};
use crate::rng::RngStream;

/// `‖Wx − ŷ‖₂ / (s·q)` with `s = ‖x‖₁` and `q` queries.
pub fn scaled_error(answers: &[f64], w: &Workload, x: &DataVector) -> Result<f64> {
    if answers.len() != w.len() {
        return Err(invalid(format!("{} answers for {} queries", answers.len(), w.len())));
    }
    let s = x.scale();
    if s == 0 {
        return Err(invalid("scaled error is undefined at scale 0"));
    }
    let truth = answer_workload(w, x)?;
    let l2 = truth.iter().zip(answers).map(|(t, a)| (t - a).powi(2)).sum::<f64>().sqrt();
    Ok(l2 / (s as f64 * w.len() as f64))
}

/// One cell of the experimental grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Setting {
    pub shape: String,
    pub scale: u64,
    pub domain: Domain,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialDesign {
    pub n_vectors: usize,
    pub n_runs: usize,
    pub seed: u64,
}

impl Default for TrialDesign {
    fn default() -> Self {
        Self {
            n_vectors: 5,
            n_runs: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSample {
    pub vector: usize,
    pub run: usize,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub vector: usize,
    pub run: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub algorithm: String,
    pub setting: Setting,
    /// Successful samples, ordered by `(vector, run)`.
    pub samples: Vec<ErrorSample>,
    pub failures: Vec<TrialFailure>,
}

impl TrialReport {
    pub fn errors(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.error).collect()
    }

    pub fn mean(&self) -> f64 {
        stats::mean_var(&self.errors()).0
    }

    /// Nearest-rank 95th percentile.
    pub fn p95(&self) -> f64 {
        let mut e = self.errors();
        if e.is_empty() {
            return f64::NAN;
        }
        e.sort_by(f64::total_cmp);
        let rank = (0.95 * e.len() as f64).ceil() as usize;
        e[rank.clamp(1, e.len()) - 1]
    }

    pub fn stderr(&self) -> f64 {
        let (_, v) = stats::mean_var(&self.errors());
        (v / self.samples.len() as f64).sqrt()
    }
}

/// Stream for the data vector with index `vector`.
pub fn data_stream(seed: u64, vector: usize) -> RngStream {
    RngStream::new(seed, RngStream::DATA_STREAM + vector as u64)
}

/// Stream for one mechanism run on one data vector.
pub fn run_stream(seed: u64, vector: usize, run: usize) -> RngStream {
    RngStream::new(seed, RngStream::pair_stream(vector as u64, run as u64))
}

/// Samples `n_vectors` data vectors of the setting's scale from `source`
/// and runs `alg` `n_runs` times on each. Mechanism errors are recorded as
/// failures rather than aborting the trial.
pub fn run_trials(
    alg: &Algorithm,
    source: &SourceDataset,
    setting: &Setting,
    w: &Workload,
    design: &TrialDesign,
) -> Result<TrialReport> {
    if setting.scale == 0 || design.n_vectors == 0 || design.n_runs == 0 {
        return Err(invalid("trials need a positive scale and at least one vector and run"));
    }
    if w.domain() != &setting.domain {
        return Err(Error::DomainMismatch {
            expected: setting.domain.to_string(),
            found: w.domain().to_string(),
        });
    }
    let shape = shape_of(&source.project(&setting.domain)?)?;
    let vectors = (0..design.n_vectors)
        .map(|v| sample_shape(&shape, setting.scale, &mut data_stream(design.seed, v)))
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(usize, usize)> = (0..design.n_vectors)
        .flat_map(|v| (0..design.n_runs).map(move |r| (v, r)))
        .collect();
    let outcomes: Vec<_> = pairs
        .par_iter()
        .map(|&(v, r)| {
            let x = &vectors[v];
            alg.run(x, w, setting.epsilon, &mut run_stream(design.seed, v, r))
                .and_then(|res| scaled_error(&res.answers, w, x))
        })
        .collect();
    let mut samples = Vec::new();
    let mut failures = Vec::new();
    for (&(vector, run), outcome) in pairs.iter().zip(outcomes) {
        match outcome {
            Ok(error) => samples.push(ErrorSample { vector, run, error }),
            Err(e) => failures.push(TrialFailure {
                vector,
                run,
                message: e.to_string(),
            }),
        }
    }
    Ok(TrialReport {
        algorithm: alg.name().to_string(),
        setting: setting.clone(),
        samples,
        failures,
    })
}

/// One row of the per-trial CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub algorithm: String,
    pub shape: String,
    pub scale: u64,
    pub domain: String,
    pub epsilon: f64,
    pub trial: usize,
    pub error: f64,
}

/// One row of the summary CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub algorithm: String,
    pub shape: String,
    pub scale: u64,
    pub domain: String,
    pub epsilon: f64,
    pub mean: f64,
    pub p95: f64,
    pub stderr: f64,
    pub competitive: bool,
}

pub fn trial_rows(report: &TrialReport, n_runs: usize) -> Vec<TrialRow> {
    report
        .samples
        .iter()
        .map(|s| TrialRow {
            algorithm: report.algorithm.clone(),
            shape: report.setting.shape.clone(),
            scale: report.setting.scale,
            domain: report.setting.domain.to_string(),
            epsilon: report.setting.epsilon,
            trial: s.vector * n_runs + s.run,
            error: s.error,
        })
        .collect()
}

/// Summary rows for reports that share one setting, with competitive flags.
pub fn summarize(reports: &[TrialReport]) -> Result<Vec<SummaryRow>> {
    let errors: Vec<Vec<f64>> = reports.iter().map(TrialReport::errors).collect();
    let usable: Vec<usize> = (0..reports.len()).filter(|&i| errors[i].len() >= 2).collect();
    let competitive: Vec<usize> = if usable.len() >= 2 {
        let refs: Vec<&[f64]> = usable.iter().map(|&i| errors[i].as_slice()).collect();
        competitive_set(&refs)?.into_iter().map(|k| usable[k]).collect()
    } else {
        usable.clone()
    };
    Ok(reports
        .iter()
        .enumerate()
        .map(|(i, r)| SummaryRow {
            algorithm: r.algorithm.clone(),
            shape: r.setting.shape.clone(),
            scale: r.setting.scale,
            domain: r.setting.domain.to_string(),
            epsilon: r.setting.epsilon,
            mean: r.mean(),
            p95: r.p95(),
            stderr: r.stderr(),
            competitive: competitive.contains(&i),
        })
        .collect())
}

pub fn write_csv<T: Serialize>(rows: &[T], out: impl Write) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    for row in rows {
        wtr.serialize(row).map_err(csv_err)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Writes the header even when `rows` is empty.
pub fn write_csv_with_header<T: Serialize>(header: &[&str], rows: &[T], out: impl Write) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    wtr.write_record(header).map_err(csv_err)?;
    for row in rows {
        wtr.serialize(row).map_err(csv_err)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(input: impl Read) -> Result<Vec<T>> {
    let mut rdr = csv::Reader::from_reader(input);
    rdr.deserialize()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| Error::Parse {
                line: i + 2,
                message: e.to_string(),
            })
        })
        .collect()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}
