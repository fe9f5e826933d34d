//! Datasets: in-memory container, synthetic cluster generator, CSV I/O.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::RngStream;

/// Labeled feature matrix: `m` rows of `d` features with class labels
/// below `num_classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Matrix,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if labels.len() != features.rows() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} feature rows",
                labels.len(),
                features.rows()
            )));
        }
        if num_classes < 2 {
            return Err(Error::Config("a dataset needs at least 2 classes".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Config(format!(
                "label {bad} exceeds class count {num_classes}"
            )));
        }
        Ok(Dataset { features, labels, num_classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Feature dimension d.
    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    /// Samples per class, indexed by class.
    pub fn class_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Smallest per-class count m_min (0 when a class is absent).
    pub fn min_class_count(&self) -> u64 {
        self.class_counts().into_iter().min().unwrap_or(0)
    }

    /// Error naming the first class with no samples; training and
    /// confusion passes need every class represented.
    pub fn require_all_classes(&self) -> Result<()> {
        if let Some(missing) = self.class_counts().iter().position(|&c| c == 0) {
            return Err(Error::Config(format!("class {missing} has no samples")));
        }
        Ok(())
    }

    /// Largest ℓ₂ row norm (the input bound B).
    pub fn max_row_norm(&self) -> f64 {
        (0..self.len())
            .map(|i| self.feature(i).iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// Divide every feature by the max row norm so B becomes 1.
    /// A dataset of all-zero rows is left untouched.
    pub fn normalize_max_norm(&mut self) {
        let b = self.max_row_norm();
        if b > 0.0 {
            for v in self.features.as_mut_slice() {
                *v /= b;
            }
        }
    }
}

/// Shape and geometry of the synthetic cluster task.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SyntheticSpec {
    /// Number of classes (≥ 2); one cluster per class.
    pub num_classes: usize,
    /// Samples per class; length must equal `num_classes`.
    pub sizes: Vec<usize>,
    /// Feature dimension (≥ 2; centers live in the first two coordinates).
    pub dim: usize,
    /// Circle radius the cluster centers sit on (inter-class distance).
    pub radius: f64,
    /// Standard deviation of each Gaussian cluster.
    pub spread: f64,
    /// Probability that a sample's features are drawn around a random
    /// *other* class's center while keeping its own label.  0 gives
    /// pure Gaussian clusters; larger values create irreducible
    /// confusion between classes.
    pub overlap: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            num_classes: 5,
            sizes: vec![200, 200, 200, 200, 40],
            dim: 2,
            radius: 2.0,
            spread: 0.7,
            overlap: 0.0,
        }
    }
}

/// Center of class `j`: angle 2πj/d_y on the circle, embedded in the
/// first two coordinates.
fn class_center(j: usize, num_classes: usize, dim: usize, radius: f64) -> Vec<f64> {
    let angle = 2.0 * std::f64::consts::PI * j as f64 / num_classes as f64;
    let mut c = vec![0.0; dim];
    c[0] = radius * angle.cos();
    c[1] = radius * angle.sin();
    c
}

/// Deterministic Gaussian clusters on a circle.  Sample `s` draws from
/// stream `s` of the seed, so the dataset is a pure function of
/// (spec, seed) independent of generation order.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<Dataset> {
    if spec.num_classes < 2 {
        return Err(Error::Config("need at least 2 classes".into()));
    }
    if spec.sizes.len() != spec.num_classes {
        return Err(Error::Config(format!(
            "{} sizes given for {} classes",
            spec.sizes.len(),
            spec.num_classes
        )));
    }
    if spec.sizes.iter().any(|&s| s == 0) {
        return Err(Error::Config("every class needs at least 1 sample".into()));
    }
    if spec.dim < 2 {
        return Err(Error::Config("feature dimension must be at least 2".into()));
    }
    if !(spec.radius > 0.0) || !(spec.spread >= 0.0) {
        return Err(Error::Config("radius must be > 0 and spread >= 0".into()));
    }
    if !(0.0..1.0).contains(&spec.overlap) {
        return Err(Error::Config("overlap must lie in [0, 1)".into()));
    }
    let m: usize = spec.sizes.iter().sum();
    let mut features = Matrix::zeros(m, spec.dim);
    let mut labels = Vec::with_capacity(m);
    let mut row = 0;
    for (class, &size) in spec.sizes.iter().enumerate() {
        for _ in 0..size {
            let mut stream = RngStream::new(seed, row as u64);
            // First word decides cluster membership, the rest the offset.
            let u = stream.next_uniform();
            let center_class = if u < spec.overlap {
                // Uniform over the other classes.
                let pick = stream.next_below(spec.num_classes as u64 - 1) as usize;
                if pick >= class {
                    pick + 1
                } else {
                    pick
                }
            } else {
                class
            };
            let center = class_center(center_class, spec.num_classes, spec.dim, spec.radius);
            let noise = stream.gaussian_vector(spec.dim, spec.spread);
            let out = features.row_mut(row);
            for ((o, c), n) in out.iter_mut().zip(&center).zip(&noise) {
                *o = c + n;
            }
            labels.push(class);
            row += 1;
        }
    }
    Dataset::new(features, labels, spec.num_classes)
}

/// Parse `label,f1,...,fd` rows.  A single leading header line is
/// skipped when its first field is not numeric.  `expected_classes`
/// pins the class count (labels at or above it are parse errors);
/// without it the count is inferred as max label + 1.
pub fn load_csv(path: &Path, expected_classes: Option<usize>) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut width: Option<usize> = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if rows.is_empty() && lineno == 1 && fields[0].trim().parse::<f64>().is_err() {
            continue; // header
        }
        if fields.len() < 2 {
            return Err(Error::Parse {
                line: lineno,
                message: "need a label and at least one feature".into(),
            });
        }
        match width {
            None => width = Some(fields.len()),
            Some(w) if w != fields.len() => {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("row has {} fields, expected {}", fields.len(), w),
                })
            }
            _ => {}
        }
        let label: usize = fields[0].trim().parse().map_err(|_| Error::Parse {
            line: lineno,
            message: format!("label {:?} is not a nonnegative integer", fields[0]),
        })?;
        if let Some(dy) = expected_classes {
            if label >= dy {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("label {label} exceeds class count {dy}"),
                });
            }
        }
        let mut feat = Vec::with_capacity(fields.len() - 1);
        for f in &fields[1..] {
            let v: f64 = f.trim().parse().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("field {f:?} is not numeric"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("field {f:?} is not finite"),
                });
            }
            feat.push(v);
        }
        labels.push(label);
        rows.push(feat);
    }
    if rows.is_empty() {
        return Err(Error::Data(format!("{} holds no data rows", path.display())));
    }
    let num_classes = expected_classes
        .unwrap_or_else(|| labels.iter().max().map_or(0, |&m| m + 1))
        .max(2);
    let features = Matrix::from_rows(&rows)?;
    Dataset::new(features, labels, num_classes)
}

/// Write `label,f1,...,fd` rows.  Features print in shortest
/// round-trip form, so save → load reproduces values exactly.
pub fn save_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for i in 0..dataset.len() {
        let mut line = dataset.label(i).to_string();
        for v in dataset.feature(i) {
            line.push(',');
            line.push_str(&v.to_string());
        }
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    out.flush()?;
    Ok(())
}
