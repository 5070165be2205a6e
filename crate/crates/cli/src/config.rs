//! Benchmark configuration files and built-in presets.
//!
//! A config is TOML:
//!
//! ```toml
//! seed = 7
//!
//! [grid]
//! scales = [1000, 100000]
//! domains = ["256", "32x32"]
//! epsilons = [0.1]
//!
//! [trials]
//! vectors = 5
//! runs = 10
//!
//! [[algorithms]]
//! name = "dawa"
//! rho = 0.3
//!
//! [[datasets]]
//! name = "ramp"
//! path = "ramp.csv"
//!
//! [[datasets]]
//! name = "zipf"
//! domain = "4096"
//! shape = { kind = "powerlaw", exponent = 1.0 }
//! ```
//!
//! Algorithm tables hold a registry name plus any parameters to override.

use std::path::{Path, PathBuf};

use dpbench::algorithms::{Algorithm, ALGORITHM_NAMES};
use dpbench::datagen::{load_histogram_csv, presets, synth_shape, synthetic_source, ShapeKind, SourceDataset, SHAPE_FAMILIES};
use dpbench::model::{make_identity_workload, make_prefix_workload, make_random_range_workload, Domain, Workload};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<u64>,
    output: Option<PathBuf>,
    #[serde(default)]
    algorithms: Vec<toml::Table>,
    #[serde(default)]
    datasets: Vec<DatasetSpec>,
    grid: Option<GridSection>,
    #[serde(default)]
    trials: TrialsSection,
    #[serde(default)]
    workload: WorkloadSpec,
    tune: Option<TuneSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSection {
    scales: Vec<u64>,
    domains: Vec<String>,
    epsilons: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct TrialsSection {
    vectors: usize,
    runs: usize,
}

impl Default for TrialsSection {
    fn default() -> Self {
        Self { vectors: 5, runs: 10 }
    }
}

/// Where a source histogram comes from.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub name: String,
    pub path: Option<PathBuf>,
    pub shape: Option<ShapeKind>,
    pub domain: Option<String>,
}

/// Queries asked in every setting.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorkloadSpec {
    /// `auto` (prefix in 1D, random ranges in 2D), `prefix`, `identity`
    /// or `random_range`.
    pub kind: WorkloadKind,
    pub queries: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkloadKind {
    Auto,
    Prefix,
    Identity,
    RandomRange,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        Self {
            kind: WorkloadKind::Auto,
            queries: 2000,
        }
    }
}

impl WorkloadSpec {
    pub fn build(&self, domain: &Domain, seed: u64) -> dpbench::Result<Workload> {
        match (self.kind, domain.is_1d()) {
            (WorkloadKind::Auto, true) | (WorkloadKind::Prefix, _) => make_prefix_workload(domain),
            (WorkloadKind::Identity, _) => make_identity_workload(domain),
            (WorkloadKind::Auto, false) | (WorkloadKind::RandomRange, _) => {
                make_random_range_workload(domain, self.queries, seed)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct TuneSection {
    algorithm: String,
    grid: Vec<Vec<f64>>,
    products: Vec<f64>,
    #[serde(default = "one")]
    epsilon: f64,
    #[serde(default = "three")]
    trials: usize,
    domain: String,
    training: Vec<String>,
    #[serde(default = "three")]
    shapes_per_family: usize,
}

fn one() -> f64 {
    1.0
}

fn three() -> usize {
    3
}

/// Parameter-learning job.
#[derive(Debug, Clone, PartialEq)]
pub struct TuneConfig {
    pub algorithm: String,
    pub grid: Vec<Vec<f64>>,
    pub products: Vec<f64>,
    pub epsilon: f64,
    pub trials: usize,
    pub domain: Domain,
    pub training: Vec<String>,
    pub shapes_per_family: usize,
}

/// A validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub algorithms: Vec<Algorithm>,
    pub datasets: Vec<DatasetSpec>,
    pub scales: Vec<u64>,
    pub domains: Vec<Domain>,
    pub epsilons: Vec<f64>,
    pub vectors: usize,
    pub runs: usize,
    pub workload: WorkloadSpec,
    pub tune: Option<TuneConfig>,
}

/// 1-based line of the first occurrence of `needle`, if any.
fn line_of(text: &str, needle: &str) -> Option<usize> {
    text.lines().position(|l| l.contains(needle)).map(|i| i + 1)
}

fn config_error(text: &str, needle: &str, message: impl Into<String>) -> CliError {
    let message = message.into();
    match line_of(text, needle) {
        Some(line) => CliError::Config(format!("line {line}: {message}")),
        None => CliError::Config(message),
    }
}

/// Registry entry `name` with the table's other keys overriding defaults.
pub fn algorithm_from_table(table: &toml::Table) -> Result<Algorithm, String> {
    let name = table
        .get("name")
        .and_then(|v| v.as_str())
        .ok_or("algorithm entries need a name")?;
    if !ALGORITHM_NAMES.contains(&name) {
        return Err(format!("unknown algorithm {name:?}"));
    }
    let base = Algorithm::from_name(name).map_err(|e| e.to_string())?;
    let mut json = serde_json::to_value(&base).map_err(|e| e.to_string())?;
    let overrides = serde_json::to_value(table).map_err(|e| e.to_string())?;
    let obj = json.as_object_mut().ok_or("algorithm parameters must be a table")?;
    for (k, v) in overrides.as_object().into_iter().flatten() {
        if k != "name" && !obj.contains_key(k) {
            return Err(format!("{name} has no parameter {k:?}"));
        }
        obj.insert(k.clone(), v.clone());
    }
    serde_json::from_value(json).map_err(|e| format!("bad parameters for {name}: {e}"))
}

fn parse_domain(text: &str, s: &str) -> Result<Domain, CliError> {
    s.parse().map_err(|e| config_error(text, s, format!("{e}")))
}

impl BenchConfig {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start].matches('\n').count() + 1)
                .map(|l| format!("line {l}: "))
                .unwrap_or_default();
            CliError::Config(format!("{line}{}", e.message()))
        })?;
        let seed = raw
            .seed
            .ok_or_else(|| CliError::Config("a seed is required for reproducible runs".into()))?;
        let mut algorithms = Vec::new();
        for table in &raw.algorithms {
            let needle = table.get("name").and_then(|v| v.as_str()).unwrap_or("[[algorithms]]");
            algorithms.push(algorithm_from_table(table).map_err(|m| config_error(text, needle, m))?);
        }
        for d in &raw.datasets {
            match (&d.path, &d.shape) {
                (Some(_), None) => {}
                (None, Some(_)) if d.domain.is_some() => {}
                _ => {
                    return Err(config_error(
                        text,
                        &d.name,
                        format!("dataset {:?} needs either a path or a shape with a domain", d.name),
                    ))
                }
            }
        }
        let (scales, domains, epsilons) = match &raw.grid {
            Some(g) => {
                if g.scales.is_empty() || g.domains.is_empty() || g.epsilons.is_empty() {
                    return Err(config_error(text, "[grid]", "grid lists must be non-empty"));
                }
                if g.scales.contains(&0) {
                    return Err(config_error(text, "scales", "scales must be positive"));
                }
                if g.epsilons.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
                    return Err(config_error(text, "epsilons", "epsilons must be positive"));
                }
                let domains = g.domains.iter().map(|d| parse_domain(text, d)).collect::<Result<_, _>>()?;
                (g.scales.clone(), domains, g.epsilons.clone())
            }
            None => (Vec::new(), Vec::new(), Vec::new()),
        };
        if raw.trials.vectors == 0 || raw.trials.runs == 0 {
            return Err(config_error(text, "[trials]", "trial counts must be positive"));
        }
        let tune = raw
            .tune
            .as_ref()
            .map(|t| {
                if t.grid.is_empty() || t.products.is_empty() {
                    return Err(config_error(text, "[tune]", "tuning grid and products must be non-empty"));
                }
                if t.training.is_empty() {
                    return Err(config_error(text, "training", "the training list is empty"));
                }
                for name in &t.training {
                    if raw.datasets.iter().any(|d| &d.name == name) {
                        return Err(config_error(
                            text,
                            "training",
                            format!("{name:?} is an evaluation dataset; tuning may only use synthetic shapes"),
                        ));
                    }
                    if !SHAPE_FAMILIES.contains(&name.as_str()) {
                        return Err(config_error(
                            text,
                            "training",
                            format!("{name:?} is not a synthetic shape family ({})", SHAPE_FAMILIES.join(", ")),
                        ));
                    }
                }
                Ok(TuneConfig {
                    algorithm: t.algorithm.clone(),
                    grid: t.grid.clone(),
                    products: t.products.clone(),
                    epsilon: t.epsilon,
                    trials: t.trials,
                    domain: parse_domain(text, &t.domain)?,
                    training: t.training.clone(),
                    shapes_per_family: t.shapes_per_family,
                })
            })
            .transpose()?;
        Ok(Self {
            seed,
            output: raw.output,
            algorithms,
            datasets: raw.datasets,
            scales,
            domains,
            epsilons,
            vectors: raw.trials.vectors,
            runs: raw.trials.runs,
            workload: raw.workload,
            tune,
        })
    }

    /// Checks that a benchmark grid can run.
    pub fn require_grid(&self) -> Result<(), CliError> {
        if self.algorithms.is_empty() || self.datasets.is_empty() || self.scales.is_empty() {
            return Err(CliError::Config(
                "running needs [[algorithms]], [[datasets]] and a [grid]".into(),
            ));
        }
        Ok(())
    }

    pub fn preset(name: &str) -> Result<Self, CliError> {
        let algs = |names: &[&str]| names.iter().map(|n| Algorithm::from_name(n).expect("registry name")).collect();
        let synthetic = |domain: &str| {
            vec![
                DatasetSpec {
                    name: "powerlaw".into(),
                    path: None,
                    shape: Some(ShapeKind::PowerLaw { exponent: 1.1 }),
                    domain: Some(domain.into()),
                },
                DatasetSpec {
                    name: "normal".into(),
                    path: None,
                    shape: Some(ShapeKind::Normal { mean: 0.3 * 4096.0, sd: 300.0 }),
                    domain: Some(domain.into()),
                },
            ]
        };
        let domains_1d = |sizes: &[usize]| sizes.iter().map(|&n| Domain::one_d(n).expect("positive")).collect();
        let domains_2d = |sides: &[usize]| sides.iter().map(|&n| Domain::two_d(n, n).expect("positive")).collect();
        let base = |algorithms, datasets, scales: &[u64], domains| Self {
            seed: 20_140_901,
            output: None,
            algorithms,
            datasets,
            scales: scales.to_vec(),
            domains,
            epsilons: vec![0.1],
            vectors: 5,
            runs: 10,
            workload: WorkloadSpec::default(),
            tune: None,
        };
        Ok(match name {
            "desk-1d" => base(algs(&["identity", "hb", "dawa"]), synthetic("4096"), &presets::DESK_SCALES, domains_1d(&presets::DESK_DOMAINS_1D)),
            "desk-2d" => base(algs(&["identity", "ugrid", "dawa"]), synthetic("256x256"), &presets::DESK_SCALES, domains_2d(&[32, 64])),
            "full-1d" => base(
                algs(&["identity", "privelet", "h", "hb", "greedyh", "uniform", "mwem", "ahp", "dpcube", "dawa", "php", "efpa", "sf"]),
                synthetic("4096"),
                &presets::FULL_SCALES,
                domains_1d(&presets::FULL_DOMAINS_1D),
            ),
            "full-2d" => base(
                algs(&["identity", "privelet", "h", "hb", "greedyh", "uniform", "mwem", "ahp", "dpcube", "dawa", "quadtree", "ugrid", "agrid"]),
                synthetic("256x256"),
                &presets::FULL_SCALES,
                domains_2d(&presets::FULL_DOMAINS_2D),
            ),
            other => {
                return Err(CliError::Config(format!(
                    "unknown preset {other:?}; known presets: desk-1d, desk-2d, full-1d, full-2d"
                )))
            }
        })
    }
}

/// Loads or synthesizes a dataset relative to `base_dir`.
pub fn load_dataset(spec: &DatasetSpec, base_dir: &Path) -> Result<SourceDataset, CliError> {
    match (&spec.path, &spec.shape, &spec.domain) {
        (Some(path), _, _) => {
            let full = if path.is_absolute() { path.clone() } else { base_dir.join(path) };
            let mut src = load_histogram_csv(&full).map_err(|e| match e {
                dpbench::Error::Io(m) => CliError::Io(format!("{}: {m}", full.display())),
                other => CliError::Config(format!("{}: {other}", full.display())),
            })?;
            src.name = spec.name.clone();
            Ok(src)
        }
        (None, Some(kind), Some(domain)) => {
            let domain: Domain = domain.parse().map_err(|e| CliError::Config(format!("{e}")))?;
            let shape = synth_shape(*kind, &domain).map_err(|e| CliError::Config(format!("{}: {e}", spec.name)))?;
            synthetic_source(spec.name.clone(), &shape, 1_000_000_000).map_err(|e| CliError::Config(e.to_string()))
        }
        _ => Err(CliError::Config(format!("dataset {:?} is incomplete", spec.name))),
    }
}
