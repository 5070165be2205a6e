//! Python bindings for the benchmark library.

use dpbench::algorithms::{Algorithm as CoreAlgorithm, ALGORITHM_NAMES};
use dpbench::datagen::{self, ShapeKind};
use dpbench::harness::{self, checks, stats};
use dpbench::model::{self, DataVector, Domain, Shape};
use dpbench::rng::RngStream;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn domain(shape: Option<Vec<usize>>, cells: usize) -> PyResult<Domain> {
    Domain::new(shape.unwrap_or_else(|| vec![cells])).map_err(err)
}

fn vector(counts: Vec<u64>, shape: Option<Vec<usize>>) -> PyResult<DataVector> {
    DataVector::new(domain(shape, counts.len())?, counts).map_err(err)
}

/// Kwargs as JSON, via the interpreter's own encoder.
fn kwargs_json(py: Python<'_>, kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<serde_json::Value> {
    let Some(kw) = kwargs else {
        return Ok(serde_json::Value::Object(Default::default()));
    };
    let text: String = py.import("json")?.call_method1("dumps", (kw,))?.extract()?;
    serde_json::from_str(&text).map_err(err)
}

/// A range-query workload over a 1D or 2D domain.
#[pyclass(module = "dpbench", frozen)]
struct Workload {
    inner: model::Workload,
}

#[pymethods]
impl Workload {
    #[staticmethod]
    fn prefix(shape: Vec<usize>) -> PyResult<Self> {
        let d = Domain::new(shape).map_err(err)?;
        Ok(Self { inner: model::make_prefix_workload(&d).map_err(err)? })
    }

    #[staticmethod]
    fn identity(shape: Vec<usize>) -> PyResult<Self> {
        let d = Domain::new(shape).map_err(err)?;
        Ok(Self { inner: model::make_identity_workload(&d).map_err(err)? })
    }

    #[staticmethod]
    #[pyo3(signature = (shape, count, seed=0))]
    fn random_ranges(shape: Vec<usize>, count: usize, seed: u64) -> PyResult<Self> {
        let d = Domain::new(shape).map_err(err)?;
        Ok(Self { inner: model::make_random_range_workload(&d, count, seed).map_err(err)? })
    }

    #[getter]
    fn shape(&self) -> Vec<usize> {
        self.inner.domain().axis_sizes().to_vec()
    }

    /// Inclusive `(lo, hi)` bounds per axis for every query.
    fn queries(&self) -> Vec<Vec<(usize, usize)>> {
        self.inner.queries().iter().map(|q| q.bounds(self.inner.domain())).collect()
    }

    /// Exact answers on a histogram.
    fn answer(&self, counts: Vec<u64>) -> PyResult<Vec<f64>> {
        let x = vector(counts, Some(self.shape()))?;
        model::answer_workload(&self.inner, &x).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Workload({} queries over {})", self.inner.len(), self.inner.domain())
    }
}

/// Output of one mechanism run.
#[pyclass(module = "dpbench", frozen, get_all)]
struct RunResult {
    estimate: Vec<f64>,
    answers: Vec<f64>,
    epsilon: f64,
    balanced: bool,
}

#[pymethods]
impl RunResult {
    fn __repr__(&self) -> String {
        format!("RunResult(epsilon={}, {} answers)", self.epsilon, self.answers.len())
    }
}

/// A configured algorithm; keyword arguments override registry defaults.
#[pyclass(module = "dpbench", frozen)]
struct Algorithm {
    inner: CoreAlgorithm,
}

#[pymethods]
impl Algorithm {
    #[new]
    #[pyo3(signature = (name, **params))]
    fn new(py: Python<'_>, name: &str, params: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let base = CoreAlgorithm::from_name(name).map_err(err)?;
        let mut json = serde_json::to_value(&base).map_err(err)?;
        let obj = json.as_object_mut().expect("algorithms serialize as objects");
        if let serde_json::Value::Object(over) = kwargs_json(py, params)? {
            for (k, v) in over {
                if !obj.contains_key(&k) || k == "name" {
                    return Err(PyValueError::new_err(format!("{name} has no parameter {k:?}")));
                }
                obj.insert(k, v);
            }
        }
        let inner = serde_json::from_value(json).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn name(&self) -> &'static str {
        self.inner.name()
    }

    /// Parameters, including the name, as a JSON string.
    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("algorithms serialize")
    }

    fn supports(&self, shape: Vec<usize>) -> PyResult<bool> {
        Ok(self.inner.supports(&Domain::new(shape).map_err(err)?))
    }

    #[getter]
    fn consistent(&self) -> bool {
        self.inner.is_consistent()
    }

    #[getter]
    fn exchangeable(&self) -> bool {
        self.inner.is_exchangeable()
    }

    #[getter]
    fn data_independent(&self) -> bool {
        self.inner.is_data_independent()
    }

    /// Runs the mechanism once; `(seed, stream)` fixes its randomness.
    #[pyo3(signature = (counts, workload, epsilon, seed=0, stream=0))]
    fn run(
        &self,
        py: Python<'_>,
        counts: Vec<u64>,
        workload: &Workload,
        epsilon: f64,
        seed: u64,
        stream: u64,
    ) -> PyResult<RunResult> {
        let x = vector(counts, Some(workload.shape()))?;
        let alg = self.inner.clone();
        let w = workload.inner.clone();
        let r = py
            .detach(move || alg.run(&x, &w, epsilon, &mut RngStream::new(seed, stream)))
            .map_err(err)?;
        Ok(RunResult {
            epsilon: r.epsilon(),
            balanced: r.ledger.is_balanced(),
            estimate: r.estimate,
            answers: r.answers,
        })
    }

    fn __repr__(&self) -> String {
        format!("Algorithm({})", self.to_json())
    }
}

fn shape_from(weights: Vec<f64>, shape: Option<Vec<usize>>) -> PyResult<Shape> {
    Shape::from_weights(domain(shape, weights.len())?, weights).map_err(err)
}

/// Draws a histogram of exactly `m` records from normalized `weights`.
#[pyfunction]
#[pyo3(signature = (weights, m, seed=0, stream=0, shape=None))]
fn sample(weights: Vec<f64>, m: u64, seed: u64, stream: u64, shape: Option<Vec<usize>>) -> PyResult<Vec<u64>> {
    let s = shape_from(weights, shape)?;
    let x = datagen::sample_shape(&s, m, &mut RngStream::new(seed, stream)).map_err(err)?;
    Ok(x.counts().to_vec())
}

/// Probabilities of a synthetic shape, e.g. `synth_shape([64], kind="powerlaw", exponent=1.0)`.
#[pyfunction]
#[pyo3(signature = (shape, **kind))]
fn synth_shape(py: Python<'_>, shape: Vec<usize>, kind: Option<&Bound<'_, PyDict>>) -> PyResult<Vec<f64>> {
    let k: ShapeKind = serde_json::from_value(kwargs_json(py, kind)?).map_err(err)?;
    let d = Domain::new(shape).map_err(err)?;
    Ok(datagen::synth_shape(k, &d).map_err(err)?.probs().to_vec())
}

#[pyfunction]
fn scaled_error(answers: Vec<f64>, workload: &Workload, counts: Vec<u64>) -> PyResult<f64> {
    let x = vector(counts, Some(workload.shape()))?;
    harness::scaled_error(&answers, &workload.inner, &x).map_err(err)
}

/// `(t, df, p_greater, p_two_sided)` for an unequal-variance t-test of `a` against `b`.
#[pyfunction]
fn welch_t_test(a: Vec<f64>, b: Vec<f64>) -> PyResult<(f64, f64, f64, f64)> {
    let t = stats::welch_t_test(&a, &b).map_err(err)?;
    Ok((t.t, t.df, t.p_greater, t.p_two_sided))
}

#[pyfunction]
fn competitive_set(samples: Vec<Vec<f64>>) -> PyResult<Vec<usize>> {
    let refs: Vec<&[f64]> = samples.iter().map(Vec::as_slice).collect();
    stats::competitive_set(&refs).map_err(err)
}

#[pyfunction]
fn regret(errors: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    stats::regret(&errors).map_err(err)
}

/// Whether errors at `(m, ε)` and `(c·m, ε/c)` are indistinguishable;
/// returns `(mean_base, mean_scaled, p_two_sided, pass)`.
#[pyfunction]
#[pyo3(signature = (algorithm, weights, workload, scale, epsilon, factor=10, trials=100, alpha=0.01, seed=0))]
#[allow(clippy::too_many_arguments)]
fn check_exchangeability(
    py: Python<'_>,
    algorithm: &Algorithm,
    weights: Vec<f64>,
    workload: &Workload,
    scale: u64,
    epsilon: f64,
    factor: u64,
    trials: usize,
    alpha: f64,
    seed: u64,
) -> PyResult<(f64, f64, f64, bool)> {
    let shape = shape_from(weights, Some(workload.shape()))?;
    let (alg, w) = (algorithm.inner.clone(), workload.inner.clone());
    let v = py
        .detach(move || checks::check_exchangeability(&alg, &shape, &w, scale, epsilon, factor, trials, alpha, seed))
        .map_err(err)?;
    Ok((v.mean_base, v.mean_scaled, v.test.p_two_sided, v.pass))
}

/// Mean scaled error along the ε ladder; returns `(means, pass)`.
#[pyfunction]
#[pyo3(signature = (algorithm, counts, workload, trials=20, floor=1e-3, seed=0))]
fn check_consistency(
    py: Python<'_>,
    algorithm: &Algorithm,
    counts: Vec<u64>,
    workload: &Workload,
    trials: usize,
    floor: f64,
    seed: u64,
) -> PyResult<(Vec<f64>, bool)> {
    let x = vector(counts, Some(workload.shape()))?;
    let (alg, w) = (algorithm.inner.clone(), workload.inner.clone());
    let v = py
        .detach(move || checks::check_consistency(&alg, &x, &w, &checks::DEFAULT_LADDER, trials, floor, seed))
        .map_err(err)?;
    Ok((v.means, v.pass))
}

#[pymodule(name = "dpbench")]
fn dpbench_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("ALGORITHM_NAMES", ALGORITHM_NAMES.to_vec())?;
    m.add_class::<Workload>()?;
    m.add_class::<Algorithm>()?;
    m.add_class::<RunResult>()?;
    m.add_function(wrap_pyfunction!(sample, m)?)?;
    m.add_function(wrap_pyfunction!(synth_shape, m)?)?;
    m.add_function(wrap_pyfunction!(scaled_error, m)?)?;
    m.add_function(wrap_pyfunction!(welch_t_test, m)?)?;
    m.add_function(wrap_pyfunction!(competitive_set, m)?)?;
    m.add_function(wrap_pyfunction!(regret, m)?)?;
    m.add_function(wrap_pyfunction!(check_exchangeability, m)?)?;
    m.add_function(wrap_pyfunction!(check_consistency, m)?)?;
    Ok(())
}
