//! Data generation: resampling a source histogram at a new scale and domain,
//! synthetic training shapes, and the histogram file format.
//!
//! Histogram files start with a header line, `n=<cells>` or
//! `rows=<r>,cols=<c>`, followed by comma-separated non-negative integer
//! counts in row-major order, on as many lines as convenient.

use std::path::Path;

use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{coarsen, shape_of, DataVector, Domain, Shape};
use crate::rng::RngStream;

/// A named histogram at its native domain and scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceDataset {
    pub name: String,
    pub histogram: DataVector,
}

impl SourceDataset {
    pub fn new(name: impl Into<String>, histogram: DataVector) -> Self {
        Self {
            name: name.into(),
            histogram,
        }
    }

    pub fn native_scale(&self) -> u64 {
        self.histogram.scale()
    }

    /// The histogram projected onto `target` by marginalizing and coarsening.
    pub fn project(&self, target: &Domain) -> Result<DataVector> {
        let x = &self.histogram;
        let native = x.domain();
        if native == target {
            return Ok(x.clone());
        }
        let base = match (native.dims(), target.dims()) {
            (a, b) if a == b => x.clone(),
            (2, 1) => {
                // Keep whichever axis the target size divides, columns first.
                let (rows, cols) = native.rows_cols();
                let n = target.cells();
                let keep_cols = cols % n == 0 || rows % n != 0;
                let mut out = vec![0u64; if keep_cols { cols } else { rows }];
                for r in 0..rows {
                    for c in 0..cols {
                        out[if keep_cols { c } else { r }] += x.counts()[r * cols + c];
                    }
                }
                DataVector::from_1d(out)?
            }
            _ => {
                return Err(invalid(format!("cannot derive domain {target} from {native}")));
            }
        };
        let factors = base
            .domain()
            .axis_sizes()
            .iter()
            .zip(target.axis_sizes())
            .map(|(&s, &t)| {
                if t == 0 || s % t != 0 {
                    Err(invalid(format!("target axis {t} does not divide native axis {s}")))
                } else {
                    Ok(s / t)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        coarsen(&base, &factors)
    }
}

/// Draws `m` records from the source's shape on `target`.
pub fn generate(
    source: &SourceDataset,
    target: &Domain,
    m: u64,
    rng: &mut RngStream,
) -> Result<DataVector> {
    if m == 0 {
        return Err(invalid("target scale must be at least 1"));
    }
    let shape = shape_of(&source.project(target)?)?;
    sample_shape(&shape, m, rng)
}

/// Multinomial sample of size `m`, drawn as a chain of binomials so the
/// total is exactly `m`.
pub fn sample_shape(shape: &Shape, m: u64, rng: &mut RngStream) -> Result<DataVector> {
    let probs = shape.probs();
    let mut counts = vec![0u64; probs.len()];
    let mut remaining = m;
    let mut mass = 1.0;
    for (i, &p) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if i + 1 == probs.len() {
            counts[i] = remaining;
            break;
        }
        let q = if mass > 0.0 { (p / mass).clamp(0.0, 1.0) } else { 1.0 };
        let k = Binomial::new(remaining, q)
            .map_err(|e| invalid(format!("binomial draw failed: {e}")))?
            .sample(rng);
        counts[i] = k;
        remaining -= k;
        mass -= p;
    }
    DataVector::new(shape.domain().clone(), counts)
}

/// Families of synthetic shapes used to train parameter tables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShapeKind {
    Uniform,
    /// Weights `(i+1)^(-exponent)`.
    #[serde(rename = "powerlaw")]
    PowerLaw { exponent: f64 },
    /// Gaussian bump, in cells.
    Normal { mean: f64, sd: f64 },
}

impl ShapeKind {
    fn axis_weights(&self, n: usize) -> Result<Vec<f64>> {
        match *self {
            ShapeKind::Uniform => Ok(vec![1.0; n]),
            ShapeKind::PowerLaw { exponent } => {
                if !(exponent.is_finite() && exponent >= 0.0) {
                    return Err(invalid("power-law exponent must be finite and non-negative"));
                }
                Ok((0..n).map(|i| ((i + 1) as f64).powf(-exponent)).collect())
            }
            ShapeKind::Normal { mean, sd } => {
                if !(mean.is_finite() && sd.is_finite() && sd > 0.0) {
                    return Err(invalid("normal shape needs a finite mean and positive sd"));
                }
                Ok((0..n)
                    .map(|i| {
                        let z = (i as f64 - mean) / sd;
                        (-0.5 * z * z).exp()
                    })
                    .collect())
            }
        }
    }
}

/// Shape of the given family; 2D shapes are products of per-axis weights.
pub fn synth_shape(kind: ShapeKind, domain: &Domain) -> Result<Shape> {
    let (rows, cols) = domain.rows_cols();
    let row_w = if domain.is_1d() {
        vec![1.0]
    } else {
        kind.axis_weights(rows)?
    };
    let col_w = kind.axis_weights(cols)?;
    let weights = row_w.iter().flat_map(|r| col_w.iter().map(move |c| r * c)).collect();
    Shape::from_weights(domain.clone(), weights)
}

/// Names of the synthetic families accepted by [`random_shape_kind`].
pub const SHAPE_FAMILIES: [&str; 3] = ["powerlaw", "normal", "uniform"];

/// A member of a synthetic family with random parameters: power-law
/// exponents in `[0.5, 2]`, normal bumps centred anywhere on an axis of
/// `n` cells with spread between 2% and 22% of it.
pub fn random_shape_kind(family: &str, n: usize, rng: &mut RngStream) -> Result<ShapeKind> {
    let n = n as f64;
    match family {
        "powerlaw" => Ok(ShapeKind::PowerLaw {
            exponent: 0.5 + 1.5 * rng.uniform_open01(),
        }),
        "normal" => Ok(ShapeKind::Normal {
            mean: n * rng.uniform_open01(),
            sd: n * (0.02 + 0.2 * rng.uniform_open01()),
        }),
        "uniform" => Ok(ShapeKind::Uniform),
        other => Err(invalid(format!("unknown shape family {other:?}"))),
    }
}

/// `count` shapes alternating power-law and normal families with random
/// parameters, for training on data that never touches evaluation sources.
pub fn training_shapes(domain: &Domain, count: usize, rng: &mut RngStream) -> Result<Vec<Shape>> {
    let (_, cols) = domain.rows_cols();
    (0..count)
        .map(|i| {
            let family = if i % 2 == 0 { "powerlaw" } else { "normal" };
            synth_shape(random_shape_kind(family, cols, rng)?, domain)
        })
        .collect()
}

/// A source whose counts follow `shape` at about `scale` records, rounded
/// cell by cell.
pub fn synthetic_source(name: impl Into<String>, shape: &Shape, scale: u64) -> Result<SourceDataset> {
    let counts = shape.probs().iter().map(|p| (p * scale as f64).round() as u64).collect();
    Ok(SourceDataset::new(name, DataVector::new(shape.domain().clone(), counts)?))
}

pub fn parse_histogram_csv(name: &str, text: &str) -> Result<SourceDataset> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty histogram file"))?;
    let domain = parse_header(header)?;
    let mut counts = Vec::with_capacity(domain.cells());
    for (idx, line) in lines {
        for field in line.split(',') {
            let field = field.trim();
            if field.is_empty() {
                continue;
            }
            let v: i128 = field
                .parse()
                .map_err(|_| parse_err(idx + 1, format!("{field:?} is not an integer count")))?;
            if v < 0 {
                return Err(parse_err(idx + 1, format!("negative count {v}")));
            }
            let v = u64::try_from(v).map_err(|_| parse_err(idx + 1, "count too large"))?;
            counts.push(v);
        }
    }
    if counts.len() != domain.cells() {
        return Err(invalid(format!(
            "header declares {} cells but the file holds {}",
            domain.cells(),
            counts.len()
        )));
    }
    Ok(SourceDataset::new(name, DataVector::new(domain, counts)?))
}

fn parse_header(line: &str) -> Result<Domain> {
    let mut n = None;
    let mut rows = None;
    let mut cols = None;
    for part in line.split(',') {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| parse_err(1, format!("expected key=value in header, got {part:?}")))?;
        let value: usize = value
            .trim()
            .parse()
            .map_err(|_| parse_err(1, format!("bad header value {value:?}")))?;
        match key.trim() {
            "n" => n = Some(value),
            "rows" => rows = Some(value),
            "cols" => cols = Some(value),
            other => return Err(parse_err(1, format!("unknown header key {other:?}"))),
        }
    }
    match (n, rows, cols) {
        (Some(n), None, None) => Domain::one_d(n),
        (None, Some(r), Some(c)) => Domain::two_d(r, c),
        _ => Err(parse_err(1, "header must be n=<int> or rows=<int>,cols=<int>")),
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

pub fn load_histogram_csv(path: impl AsRef<Path>) -> Result<SourceDataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "histogram".into());
    parse_histogram_csv(&name, &text)
}

/// The histogram in file format, one row of the grid per line.
pub fn histogram_to_csv(x: &DataVector) -> String {
    let (rows, cols) = x.domain().rows_cols();
    let mut out = if x.domain().is_1d() {
        format!("n={cols}\n")
    } else {
        format!("rows={rows},cols={cols}\n")
    };
    for r in 0..rows {
        let line: Vec<String> = x.counts()[r * cols..(r + 1) * cols].iter().map(u64::to_string).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Named scale and domain grids.
pub mod presets {
    pub const FULL_SCALES: [u64; 6] = [1_000, 10_000, 100_000, 1_000_000, 10_000_000, 100_000_000];
    pub const FULL_DOMAINS_1D: [usize; 5] = [256, 512, 1024, 2048, 4096];
    pub const FULL_DOMAINS_2D: [usize; 4] = [32, 64, 128, 256];
    pub const DESK_SCALES: [u64; 3] = [1_000, 10_000, 1_000_000];
    pub const DESK_DOMAINS_1D: [usize; 2] = [256, 1024];
}

#[cfg(test)]
mod tests {
    use super::*;

    fn source(counts: Vec<u64>) -> SourceDataset {
        SourceDataset::new("s", DataVector::from_1d(counts).unwrap())
    }

    #[test]
    fn output_scale_is_exact() {
        let src = source(vec![1, 1]);
        let d = Domain::one_d(2).unwrap();
        let mut rng = RngStream::new(1, 0);
        for m in [1, 4, 17, 100_000] {
            assert_eq!(generate(&src, &d, m, &mut rng).unwrap().scale(), m);
        }
    }

    #[test]
    fn empty_source_has_no_shape() {
        let src = source(vec![0, 0, 0]);
        let d = Domain::one_d(3).unwrap();
        assert_eq!(generate(&src, &d, 5, &mut RngStream::new(0, 0)), Err(Error::UndefinedShape));
    }

    #[test]
    fn projection_marginalizes_and_coarsens() {
        let x = DataVector::new(Domain::two_d(2, 4).unwrap(), vec![1, 2, 3, 4, 5, 6, 7, 8]).unwrap();
        let src = SourceDataset::new("g", x);
        let one = src.project(&Domain::one_d(2).unwrap()).unwrap();
        assert_eq!(one.counts(), &[14, 22]);
        let two = src.project(&Domain::two_d(1, 2).unwrap()).unwrap();
        assert_eq!(two.counts(), &[14, 22]);
        assert!(src.project(&Domain::one_d(3).unwrap()).is_err());
    }

    #[test]
    fn mean_matches_multinomial() {
        let shape = Shape::from_weights(Domain::one_d(3).unwrap(), vec![0.2, 0.5, 0.3]).unwrap();
        let mut rng = RngStream::new(9, 0);
        let trials = 10_000;
        let m = 50u64;
        let mut sums = [0.0; 3];
        for _ in 0..trials {
            let x = sample_shape(&shape, m, &mut rng).unwrap();
            for (s, &c) in sums.iter_mut().zip(x.counts()) {
                *s += c as f64;
            }
        }
        for (i, &p) in shape.probs().iter().enumerate() {
            let mean = sums[i] / trials as f64;
            let se = (m as f64 * p * (1.0 - p) / trials as f64).sqrt();
            assert!((mean - m as f64 * p).abs() <= 3.0 * se, "cell {i}: {mean}");
        }
    }

    #[test]
    fn synthetic_shapes() {
        let d = Domain::one_d(4).unwrap();
        assert_eq!(synth_shape(ShapeKind::Uniform, &d).unwrap().probs(), &[0.25; 4]);
        let d = Domain::one_d(512).unwrap();
        let p = synth_shape(ShapeKind::PowerLaw { exponent: 1.0 }, &d).unwrap();
        assert!(p.probs().windows(2).all(|w| w[0] >= w[1]));
        let p = synth_shape(ShapeKind::Normal { mean: 256.0, sd: 64.0 }, &d).unwrap();
        let arg = (0..512).fold(0, |b, i| if p.probs()[i] > p.probs()[b] { i } else { b });
        assert!((255..=257).contains(&arg));
        assert!(synth_shape(ShapeKind::Normal { mean: 1.0, sd: 0.0 }, &d).is_err());
        for s in training_shapes(&Domain::two_d(8, 8).unwrap(), 6, &mut RngStream::new(3, 3)).unwrap() {
            assert!((s.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn histogram_files() {
        let s = parse_histogram_csv("a", "n=4\n1,2,3,4\n").unwrap();
        assert_eq!(s.histogram.counts(), &[1, 2, 3, 4]);
        let s = parse_histogram_csv("b", "rows=2,cols=2\n1,2\n3,4\n").unwrap();
        assert_eq!(s.histogram.domain(), &Domain::two_d(2, 2).unwrap());
        assert_eq!(s.histogram.counts(), &[1, 2, 3, 4]);
        assert!(matches!(parse_histogram_csv("c", "n=2\n1,-2\n"), Err(Error::Parse { line: 2, .. })));
        assert!(parse_histogram_csv("d", "n=3\n1,2\n").is_err());
        assert!(parse_histogram_csv("e", "m=3\n1,2,3\n").is_err());
        let back = parse_histogram_csv("b", &histogram_to_csv(&s.histogram)).unwrap();
        assert_eq!(back, s);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn samples_have_the_exact_scale(
                weights in prop::collection::vec(0.0f64..5.0, 1..40),
                m in 0u64..1_000_000,
                seed in any::<u64>(),
            ) {
                prop_assume!(weights.iter().any(|&w| w > 0.0));
                let shape = Shape::from_weights(Domain::one_d(weights.len()).unwrap(), weights.clone()).unwrap();
                let x = sample_shape(&shape, m, &mut RngStream::new(seed, 0)).unwrap();
                prop_assert_eq!(x.scale(), m);
                for (c, w) in x.counts().iter().zip(&weights) {
                    prop_assert!(*w > 0.0 || *c == 0);
                }
            }

            #[test]
            fn histogram_csv_round_trips(counts in prop::collection::vec(0u64..1 << 40, 1..50)) {
                let x = DataVector::from_1d(counts).unwrap();
                let back = parse_histogram_csv("p", &histogram_to_csv(&x)).unwrap();
                prop_assert_eq!(back.histogram, x);
            }
        }
    }
}
