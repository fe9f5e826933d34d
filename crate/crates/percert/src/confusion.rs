//! Confusion matrices and their spectral structure.
//!
//! The confusion matrix here records only errors: entry (i, j) is the
//! fraction of class-j samples predicted as class i, and the diagonal
//! is identically zero.  Its largest singular value σ_max measures how
//! concentrated the error mass is, and the outer product of the top
//! singular vectors is the exact gradient of σ_max with respect to the
//! entries, which is what the regularizer feeds on.

use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::matrix::{Matrix, POWER_ITERATION_CAP, POWER_ITERATION_TOL};
use crate::nn::{argmax, forward, Network};
use crate::rng::{gaussian_words, RngStream};
use crate::smoothing::{margin_smoothed_predict, margin_winner, SmoothingConfig};

/// Zero-diagonal error matrix with column sums in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    entries: Matrix,
    class_counts: Vec<u64>,
}

impl ConfusionMatrix {
    /// Validate and wrap raw entries.  `class_counts[j]` is the number
    /// of samples behind column j (1 for synthetic matrices).
    pub fn new(entries: Matrix, class_counts: Vec<u64>) -> Result<Self> {
        let d = entries.rows();
        if d < 2 || entries.cols() != d {
            return Err(Error::InvalidInput(format!(
                "confusion matrix must be square with dim >= 2, got {}x{}",
                entries.rows(),
                entries.cols()
            )));
        }
        if class_counts.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "{} class counts for dimension {}",
                class_counts.len(),
                d
            )));
        }
        for i in 0..d {
            if entries.get(i, i) != 0.0 {
                return Err(Error::InvalidInput(format!("nonzero diagonal at {i}")));
            }
        }
        for j in 0..d {
            let mut sum = 0.0;
            for i in 0..d {
                let v = entries.get(i, j);
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(Error::InvalidInput(format!(
                        "entry ({i}, {j}) = {v} is negative or not finite"
                    )));
                }
                sum += v;
            }
            if sum > 1.0 + 1e-9 {
                return Err(Error::InvalidInput(format!(
                    "column {j} sums to {sum} > 1"
                )));
            }
        }
        Ok(ConfusionMatrix { entries, class_counts })
    }

    pub fn dim(&self) -> usize {
        self.entries.rows()
    }

    pub fn entries(&self) -> &Matrix {
        &self.entries
    }

    pub fn class_counts(&self) -> &[u64] {
        &self.class_counts
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries.get(i, j)
    }

    pub fn is_zero(&self) -> bool {
        self.entries.as_slice().iter().all(|&v| v == 0.0)
    }

    /// CSV rendering: d_y rows of d_y comma-separated values with 9
    /// significant digits.
    pub fn to_csv(&self) -> String {
        let d = self.dim();
        let mut out = String::new();
        for i in 0..d {
            for j in 0..d {
                if j > 0 {
                    out.push(',');
                }
                out.push_str(&format!("{:.8e}", self.get(i, j)));
            }
            out.push('\n');
        }
        out
    }
}

/// Top singular value with its unit singular vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularTriple {
    pub sigma_max: f64,
    pub u_hat: Vec<f64>,
    pub v_hat: Vec<f64>,
    /// Set when the input matrix was zero: the vectors are the
    /// conventional e₁ placeholders, not meaningful directions.
    pub degenerate: bool,
}

/// Rank-one gradient of σ_max with respect to the matrix entries.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientCoefficients {
    pub g: Matrix,
    pub degenerate: bool,
}

/// Tally per-sample predictions into a confusion matrix: sample `s`
/// with label `j` and prediction `i ≠ j` adds 1/m_j to entry (i, j).
fn tally(predictions: &[usize], dataset: &Dataset) -> Result<ConfusionMatrix> {
    let d = dataset.num_classes();
    let counts = dataset.class_counts();
    let mut raw = vec![0u64; d * d];
    for (s, &pred) in predictions.iter().enumerate() {
        let label = dataset.label(s);
        if pred != label {
            raw[pred * d + label] += 1;
        }
    }
    let mut entries = Matrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            if raw[i * d + j] > 0 {
                entries.set(i, j, raw[i * d + j] as f64 / counts[j] as f64);
            }
        }
    }
    ConfusionMatrix::new(entries, counts)
}

/// Empirical confusion matrix of the deterministic classifier:
/// predictions are plain argmax with lowest-index tie-break.
pub fn build_confusion_matrix(net: &Network, dataset: &Dataset) -> Result<ConfusionMatrix> {
    dataset.require_all_classes()?;
    let predictions: Vec<usize> = (0..dataset.len())
        .into_par_iter()
        .map(|s| {
            let logits = forward(net, dataset.feature(s)).expect("dataset width fixed");
            argmax(&logits)
        })
        .collect();
    tally(&predictions, dataset)
}

/// Margin confusion matrix: a sample counts as an error toward its
/// strongest wrong class `i` whenever the true logit fails to clear
/// that class by more than γ.
pub fn build_margin_confusion_matrix(
    net: &Network,
    dataset: &Dataset,
    gamma: f64,
) -> Result<ConfusionMatrix> {
    if gamma < 0.0 {
        return Err(Error::InvalidInput("gamma must be >= 0".into()));
    }
    dataset.require_all_classes()?;
    let predictions: Vec<usize> = (0..dataset.len())
        .into_par_iter()
        .map(|s| {
            let logits = forward(net, dataset.feature(s)).expect("dataset width fixed");
            margin_winner(&logits, dataset.label(s), gamma)
        })
        .collect();
    tally(&predictions, dataset)
}

/// Margin-smoothed predictions for every sample, plus the resulting
/// confusion matrix.  Sample `s` reads counter blocks
/// `[s·n_noise·w, (s+1)·n_noise·w)` of the stream (w = words per noise
/// vector), so the pass is schedule-independent; the stream advances
/// past all consumed blocks.
pub fn smoothed_confusion_with_assignments(
    net: &Network,
    dataset: &Dataset,
    gamma: f64,
    sigma_v: f64,
    n_noise: u64,
    stream: &mut RngStream,
) -> Result<(ConfusionMatrix, Vec<usize>)> {
    if n_noise < 1 {
        return Err(Error::InvalidInput("n_noise must be >= 1".into()));
    }
    dataset.require_all_classes()?;
    let cfg = SmoothingConfig {
        sigma_v,
        n_selection: 1,
        n_estimation: n_noise,
        alpha: 0.5,
        gamma,
    };
    cfg.validate()?;
    let words_per_sample = n_noise * gaussian_words(dataset.dim());
    let (seed, sid, base) = (stream.seed(), stream.stream_id(), stream.counter());
    let predictions: Result<Vec<usize>> = (0..dataset.len())
        .into_par_iter()
        .map(|s| {
            let mut local =
                RngStream::with_counter(seed, sid, base + s as u64 * words_per_sample);
            margin_smoothed_predict(net, dataset.feature(s), dataset.label(s), gamma, &cfg, &mut local)
        })
        .collect();
    let predictions = predictions?;
    stream.jump_to(base + dataset.len() as u64 * words_per_sample);
    let matrix = tally(&predictions, dataset)?;
    Ok((matrix, predictions))
}

/// Confusion matrix of the margin-smoothed classifier under Gaussian
/// noise of scale σ_v, `n_noise` draws per sample.
pub fn build_smoothed_confusion_matrix(
    net: &Network,
    dataset: &Dataset,
    gamma: f64,
    sigma_v: f64,
    n_noise: u64,
    stream: &mut RngStream,
) -> Result<ConfusionMatrix> {
    smoothed_confusion_with_assignments(net, dataset, gamma, sigma_v, n_noise, stream)
        .map(|(m, _)| m)
}

/// Largest singular value and vectors via power iteration on CᵀC,
/// started from the normalized all-ones vector (inside the nonnegative
/// cone, so it converges onto the Perron direction).  A zero matrix
/// returns the degenerate triple (0, e₁, e₁).
pub fn top_singular_triple(c: &ConfusionMatrix, tolerance: f64) -> SingularTriple {
    let d = c.dim();
    let mut e1 = vec![0.0; d];
    e1[0] = 1.0;
    if c.is_zero() {
        return SingularTriple {
            sigma_max: 0.0,
            u_hat: e1.clone(),
            v_hat: e1,
            degenerate: true,
        };
    }
    let m = c.entries();
    let mut v = vec![1.0 / (d as f64).sqrt(); d];
    let mut sigma2 = 0.0_f64;
    for _ in 0..POWER_ITERATION_CAP {
        let mv = m.matvec(&v).expect("square by construction");
        let w = m.transpose_matvec(&mv).expect("square by construction");
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / norm;
        }
        if (norm - sigma2).abs() <= tolerance * norm.max(1e-300) {
            sigma2 = norm;
            break;
        }
        sigma2 = norm;
    }
    let sigma_max = sigma2.sqrt();
    if sigma_max == 0.0 {
        // Nonzero matrix whose Gram action annihilated the iterate;
        // cannot happen for nonnegative C, but keep the fallback total.
        return SingularTriple { sigma_max: 0.0, u_hat: e1.clone(), v_hat: e1, degenerate: true };
    }
    // Sign convention: the Perron vectors are entrywise nonnegative.
    if v.iter().sum::<f64>() < 0.0 {
        for vi in &mut v {
            *vi = -*vi;
        }
    }
    let mut u = m.matvec(&v).expect("square by construction");
    for ui in &mut u {
        *ui /= sigma_max;
    }
    let un = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    for ui in &mut u {
        *ui /= un;
    }
    SingularTriple { sigma_max, u_hat: u, v_hat: v, degenerate: false }
}

/// G = û v̂ᵀ, the exact first-order sensitivity of σ_max to each
/// confusion-matrix entry.  Unit Frobenius norm by construction.
pub fn gradient_coefficient_matrix(t: &SingularTriple) -> GradientCoefficients {
    let d = t.u_hat.len();
    let mut g = Matrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            g.set(i, j, t.u_hat[i] * t.v_hat[j]);
        }
    }
    GradientCoefficients { g, degenerate: t.degenerate }
}

/// Largest column sum (the induced 1-norm of the zero-diagonal matrix).
pub fn max_column_sum(c: &ConfusionMatrix) -> f64 {
    let d = c.dim();
    (0..d)
        .map(|j| (0..d).map(|i| c.get(i, j)).sum::<f64>())
        .fold(0.0, f64::max)
}

/// μ = max column sum / σ_max; undefined for the zero matrix.
pub fn mu_ratio(c: &ConfusionMatrix) -> Result<f64> {
    let t = top_singular_triple(c, POWER_ITERATION_TOL);
    if t.degenerate || t.sigma_max == 0.0 {
        return Err(Error::Numeric(
            "mu is undefined for a zero confusion matrix".into(),
        ));
    }
    Ok(max_column_sum(c) / t.sigma_max)
}
