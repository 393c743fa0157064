//! Synthetic benchmark generators and CSV interchange.
//!
//! Generation is reproducible across platforms by construction: the only
//! randomness source is ChaCha8 seeded with the user seed, uniforms are
//! mapped from raw 64-bit draws as `(bits >> 11) * 2^-53`, and Gaussian
//! noise comes from the Box-Muller transform of those uniforms.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// A generated dataset together with the ground truth held out for scoring.
#[derive(Debug, Clone)]
pub struct GeneratedDataset {
    pub dataset: Dataset,
    pub truth: Vec<usize>,
}

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Standard-normal draws, two per Box-Muller transform.
struct GaussianSource<'a> {
    rng: &'a mut ChaCha8Rng,
    spare: Option<f64>,
}

impl<'a> GaussianSource<'a> {
    fn new(rng: &'a mut ChaCha8Rng) -> Self {
        Self { rng, spare: None }
    }

    fn next(&mut self) -> f64 {
        if let Some(v) = self.spare.take() {
            return v;
        }
        let u1 = loop {
            let u = uniform(self.rng);
            if u > 0.0 {
                break u;
            }
        };
        let u2 = uniform(self.rng);
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(radius * angle.sin());
        radius * angle.cos()
    }
}

/// Reveals `labels_per_class` labels per class by a seeded partial shuffle
/// of each class's index list.
fn reveal_labels(
    truth: &[usize],
    num_classes: usize,
    labels_per_class: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Option<usize>>> {
    let mut labels = vec![None; truth.len()];
    for class in 0..num_classes {
        let mut members: Vec<usize> = (0..truth.len()).filter(|&i| truth[i] == class).collect();
        if members.is_empty() {
            continue;
        }
        if labels_per_class > members.len() {
            return Err(Error::InvalidParameter(format!(
                "cannot reveal {labels_per_class} labels for class {class}, which has {} samples",
                members.len()
            )));
        }
        for pick in 0..labels_per_class {
            let j = pick + (rng.next_u64() as usize) % (members.len() - pick);
            members.swap(pick, j);
            labels[members[pick]] = Some(class);
        }
    }
    Ok(labels)
}

/// Two interleaved half-circles of radius 1 with the standard offset, plus
/// isotropic Gaussian noise; `labels_per_class` labels are revealed per moon.
pub fn two_moons(
    n: usize,
    noise: f64,
    labels_per_class: usize,
    seed: u64,
) -> Result<GeneratedDataset> {
    if n < 4 || !n.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "two moons needs an even n of at least 4, got {n}"
        )));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::InvalidParameter("noise must be nonnegative".into()));
    }
    if labels_per_class == 0 || labels_per_class > n / 2 {
        return Err(Error::InvalidParameter(format!(
            "labels_per_class must lie in 1..={}, got {labels_per_class}",
            n / 2
        )));
    }
    let half = n / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = DMatrix::zeros(n, 2);
    let mut truth = Vec::with_capacity(n);
    {
        let mut gauss = GaussianSource::new(&mut rng);
        for i in 0..n {
            let (class, pos) = if i < half { (0, i) } else { (1, i - half) };
            let t = if half == 1 {
                0.0
            } else {
                pos as f64 * std::f64::consts::PI / (half - 1) as f64
            };
            let (x, y) = if class == 0 {
                (t.cos(), t.sin())
            } else {
                (1.0 - t.cos(), 0.5 - t.sin())
            };
            features[(i, 0)] = x + noise * gauss.next();
            features[(i, 1)] = y + noise * gauss.next();
            truth.push(class);
        }
    }
    let labels = reveal_labels(&truth, 2, labels_per_class, &mut rng)?;
    let dataset = Dataset::new(features, labels, 2)?;
    Ok(GeneratedDataset { dataset, truth })
}

/// Isotropic Gaussian blobs around the given centers, split as evenly as
/// possible; the class of a point is its center index. A single center still
/// yields a two-class dataset with the second class empty.
pub fn blobs(
    n: usize,
    centers: &[Vec<f64>],
    stddev: f64,
    labels_per_class: usize,
    seed: u64,
) -> Result<GeneratedDataset> {
    if centers.is_empty() {
        return Err(Error::InvalidParameter("blobs need at least one center".into()));
    }
    let dim = centers[0].len();
    if dim == 0 || centers.iter().any(|c| c.len() != dim) {
        return Err(Error::InvalidParameter(
            "centers must share a positive dimension".into(),
        ));
    }
    if n < centers.len() {
        return Err(Error::InvalidParameter(format!(
            "n={n} is smaller than the number of centers {}",
            centers.len()
        )));
    }
    if !(stddev >= 0.0 && stddev.is_finite()) {
        return Err(Error::InvalidParameter("stddev must be nonnegative".into()));
    }
    if labels_per_class == 0 {
        return Err(Error::InvalidParameter(
            "labels_per_class must be at least 1".into(),
        ));
    }
    let k = centers.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = DMatrix::zeros(n, dim);
    let mut truth = Vec::with_capacity(n);
    {
        let mut gauss = GaussianSource::new(&mut rng);
        let mut row = 0;
        for (class, center) in centers.iter().enumerate() {
            let count = n / k + usize::from(class < n % k);
            for _ in 0..count {
                for (col, &value) in center.iter().enumerate() {
                    features[(row, col)] = value + stddev * gauss.next();
                }
                truth.push(class);
                row += 1;
            }
        }
    }
    let num_classes = k.max(2);
    let labels = reveal_labels(&truth, num_classes, labels_per_class, &mut rng)?;
    let dataset = Dataset::new(features, labels, num_classes)?;
    Ok(GeneratedDataset { dataset, truth })
}

/// Writes `f1,...,fd,label` rows; unlabeled samples carry `?`. Floats use
/// the shortest representation that parses back to the same value.
pub fn save_csv<P: AsRef<Path>>(data: &Dataset, path: P) -> Result<()> {
    let file = File::create(path)?;
    let mut out = BufWriter::new(file);
    let header: Vec<String> = (1..=data.dim())
        .map(|j| format!("f{j}"))
        .chain(std::iter::once("label".to_string()))
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for i in 0..data.n() {
        let mut fields: Vec<String> = (0..data.dim())
            .map(|j| format!("{}", data.features()[(i, j)]))
            .collect();
        fields.push(match data.label_of(i) {
            Some(c) => c.to_string(),
            None => "?".to_string(),
        });
        writeln!(out, "{}", fields.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Reads the `f1,...,fd,label` schema; an empty or `?` label column means
/// unlabeled. Ragged rows, non-numeric features and negative class ids are
/// parse errors naming the line.
pub fn load_csv<P: AsRef<Path>>(path: P) -> Result<Dataset> {
    let file = File::open(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(file));
    let header = reader
        .headers()
        .map_err(|e| csv_error(1, e.to_string()))?
        .clone();
    if header.len() < 2 || header.iter().next_back() != Some("label") {
        return Err(csv_error(
            1,
            format!(
                "expected header f1,...,fd,label with d >= 1, got `{}`",
                header.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    let dim = header.len() - 1;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<Option<usize>> = Vec::new();
    let mut max_class = 0usize;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e
                .position()
                .map(|p| p.line() as usize)
                .unwrap_or(rows.len() + 2);
            csv_error(line, e.to_string())
        })?;
        let line = record
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(rows.len() + 2);
        let mut features = Vec::with_capacity(dim);
        for j in 0..dim {
            let field = &record[j];
            let value: f64 = field
                .parse()
                .map_err(|_| csv_error(line, format!("non-numeric feature `{field}`")))?;
            if !value.is_finite() {
                return Err(csv_error(line, format!("non-finite feature `{field}`")));
            }
            features.push(value);
        }
        let label_field = &record[dim];
        let label = if label_field.is_empty() || label_field == "?" {
            None
        } else {
            let id: i64 = label_field
                .parse()
                .map_err(|_| csv_error(line, format!("invalid class id `{label_field}`")))?;
            if id < 0 {
                return Err(csv_error(line, format!("negative class id `{id}`")));
            }
            let id = id as usize;
            max_class = max_class.max(id);
            Some(id)
        };
        rows.push(features);
        labels.push(label);
    }
    if rows.is_empty() {
        return Err(csv_error(2, "file contains no samples".into()));
    }
    let n = rows.len();
    let features = DMatrix::from_fn(n, dim, |i, j| rows[i][j]);
    Dataset::new(features, labels, (max_class + 1).max(2))
}

fn csv_error(line: usize, message: String) -> Error {
    Error::CsvParse { line, message }
}
