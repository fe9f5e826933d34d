//! Distribution of μ = max column sum / σ_max over random confusion
//! matrices, across class counts.
//!
//! μ is provably at most √d_y; the simulation shows it concentrating
//! near 1 as the dimension grows, which is what makes σ_max a useful
//! stand-in for the worst column.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::confusion::{mu_ratio, ConfusionMatrix};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::RngStream;

/// How random matrices are drawn; the report records the choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    /// Column j gets total error mass e_j ~ U(0,1), split over its
    /// d_y−1 off-diagonal cells by a flat Dirichlet (normalized
    /// exponential draws).
    DirichletColumn,
    /// Off-diagonal cells filled i.i.d. U(0,1); any column with sum
    /// above 1 is rescaled to a fresh U(0,1) total.
    UniformRescaled,
}

impl std::str::FromStr for Generator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dirichlet_column" => Ok(Generator::DirichletColumn),
            "uniform_rescaled" => Ok(Generator::UniformRescaled),
            other => Err(Error::Usage(format!(
                "unknown generator {other:?}; use dirichlet_column or uniform_rescaled"
            ))),
        }
    }
}

/// Simulation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuSimConfig {
    pub dims: Vec<usize>,
    pub trials: u64,
    pub generator: Generator,
    pub seed: u64,
}

impl Default for MuSimConfig {
    fn default() -> Self {
        MuSimConfig {
            dims: vec![10, 20, 50, 100],
            trials: 10_000,
            generator: Generator::DirichletColumn,
            seed: 0,
        }
    }
}

impl MuSimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() {
            return Err(Error::InvalidInput("dims must be nonempty".into()));
        }
        if let Some(&d) = self.dims.iter().find(|&&d| d < 2) {
            return Err(Error::InvalidInput(format!("dimension {d} below 2")));
        }
        if self.trials < 1 {
            return Err(Error::InvalidInput("trials must be >= 1".into()));
        }
        Ok(())
    }
}

/// Five-number summary plus mean for one dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimSummary {
    pub dim: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
    /// Fraction of trials with μ > √d_y; the bound says this is 0.
    pub frac_exceeding_sqrt_dy: f64,
}

impl DimSummary {
    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }
}

/// Simulation output: config echo plus per-dimension summaries.  The
/// raw μ samples ride along for CSV export but stay out of the JSON.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MuSimReport {
    pub config: MuSimConfig,
    pub per_dim: Vec<DimSummary>,
    #[serde(skip)]
    pub raw: Vec<Vec<f64>>,
}

/// One random zero-diagonal matrix with column sums ≤ 1.
pub fn random_confusion_matrix(
    d_y: usize,
    generator: Generator,
    stream: &mut RngStream,
) -> Result<ConfusionMatrix> {
    if d_y < 2 {
        return Err(Error::InvalidInput(format!("dimension {d_y} below 2")));
    }
    let mut m = Matrix::zeros(d_y, d_y);
    match generator {
        Generator::DirichletColumn => {
            for j in 0..d_y {
                let e_j = stream.next_uniform();
                let mut weights = Vec::with_capacity(d_y - 1);
                for _ in 0..d_y - 1 {
                    weights.push(-(1.0 - stream.next_uniform()).ln());
                }
                let total: f64 = weights.iter().sum();
                let mut cell = 0;
                for i in 0..d_y {
                    if i == j {
                        continue;
                    }
                    let share = if total > 0.0 {
                        weights[cell] / total
                    } else if cell == 0 {
                        1.0
                    } else {
                        0.0
                    };
                    m.set(i, j, e_j * share);
                    cell += 1;
                }
            }
        }
        Generator::UniformRescaled => {
            for j in 0..d_y {
                let mut sum = 0.0;
                for i in 0..d_y {
                    if i != j {
                        let v = stream.next_uniform();
                        m.set(i, j, v);
                        sum += v;
                    }
                }
                if sum > 1.0 {
                    let target = stream.next_uniform();
                    for i in 0..d_y {
                        if i != j {
                            m.set(i, j, m.get(i, j) / sum * target);
                        }
                    }
                }
            }
        }
    }
    ConfusionMatrix::new(m, vec![1; d_y])
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    // Linear interpolation at rank q·(n−1).
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Run the simulation: `cfg.trials` random matrices per dimension,
/// μ of each, summarized.  Trial t of dimension index k uses stream
/// `k·trials + t`, so the report is a pure function of the config.
pub fn run_mu_simulation(cfg: &MuSimConfig) -> Result<MuSimReport> {
    cfg.validate()?;
    let mut per_dim = Vec::with_capacity(cfg.dims.len());
    let mut raw = Vec::with_capacity(cfg.dims.len());
    for (k, &dim) in cfg.dims.iter().enumerate() {
        let values: Result<Vec<f64>> = (0..cfg.trials)
            .into_par_iter()
            .map(|t| {
                let mut stream = RngStream::new(cfg.seed, k as u64 * cfg.trials + t);
                let c = random_confusion_matrix(dim, cfg.generator, &mut stream)?;
                mu_ratio(&c)
            })
            .collect();
        let values = values?;
        let mut sorted = values.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let bound = (dim as f64).sqrt();
        let exceeding = sorted.iter().filter(|&&v| v > bound).count();
        per_dim.push(DimSummary {
            dim,
            min: sorted[0],
            q1: quantile(&sorted, 0.25),
            median: quantile(&sorted, 0.5),
            q3: quantile(&sorted, 0.75),
            max: sorted[sorted.len() - 1],
            mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
            frac_exceeding_sqrt_dy: exceeding as f64 / sorted.len() as f64,
        });
        raw.push(values);
    }
    Ok(MuSimReport { config: cfg.clone(), per_dim, raw })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::confusion::max_column_sum;

    #[test]
    fn generated_matrices_satisfy_invariants() {
        for generator in [Generator::DirichletColumn, Generator::UniformRescaled] {
            for trial in 0..2000 {
                let mut s = RngStream::new(1, trial);
                let c = random_confusion_matrix(6, generator, &mut s).unwrap();
                // ConfusionMatrix::new validated zero diagonal and
                // column sums; spot-check the sums are genuinely <= 1.
                assert!(max_column_sum(&c) <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn dirichlet_two_classes_is_exact() {
        // d_y = 2: each column has one cell that takes the whole e_j.
        let mut s = RngStream::new(9, 4);
        let c = random_confusion_matrix(2, Generator::DirichletColumn, &mut s).unwrap();
        let mut replay = RngStream::new(9, 4);
        let e0 = replay.next_uniform();
        let _g0 = replay.next_uniform();
        let e1 = replay.next_uniform();
        let _g1 = replay.next_uniform();
        assert_eq!(c.get(1, 0), e0);
        assert_eq!(c.get(0, 1), e1);
    }

    #[test]
    fn dirichlet_mean_column_sum_is_half() {
        // Column sums are the e_j ~ U(0,1) draws themselves.
        let n = 50_000;
        let mut total = 0.0;
        let mut columns = 0usize;
        for trial in 0..n {
            let mut s = RngStream::new(3, trial);
            let c = random_confusion_matrix(2, Generator::DirichletColumn, &mut s).unwrap();
            for j in 0..2 {
                total += (0..2).map(|i| c.get(i, j)).sum::<f64>();
                columns += 1;
            }
        }
        let mean = total / columns as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean column sum = {mean}");
    }

    #[test]
    fn single_trial_report_is_that_value() {
        let cfg = MuSimConfig { dims: vec![10], trials: 1, ..Default::default() };
        let report = run_mu_simulation(&cfg).unwrap();
        let s = &report.per_dim[0];
        let mu = report.raw[0][0];
        for v in [s.min, s.q1, s.median, s.q3, s.max, s.mean] {
            assert_eq!(v, mu);
        }
    }

    #[test]
    fn nothing_exceeds_sqrt_dy() {
        let cfg = MuSimConfig { dims: vec![5, 12], trials: 500, ..Default::default() };
        let report = run_mu_simulation(&cfg).unwrap();
        for s in &report.per_dim {
            assert_eq!(s.frac_exceeding_sqrt_dy, 0.0, "dim {}", s.dim);
            assert!(s.max <= (s.dim as f64).sqrt());
            assert!(s.min > 0.0);
        }
    }

    #[test]
    fn report_is_deterministic() {
        let cfg = MuSimConfig { dims: vec![8], trials: 200, seed: 42, ..Default::default() };
        let a = run_mu_simulation(&cfg).unwrap();
        let b = run_mu_simulation(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn quantiles_are_ordered() {
        let cfg = MuSimConfig { dims: vec![10, 20], trials: 300, ..Default::default() };
        let report = run_mu_simulation(&cfg).unwrap();
        for s in &report.per_dim {
            assert!(s.min <= s.q1 && s.q1 <= s.median && s.median <= s.q3 && s.q3 <= s.max);
        }
    }

    #[test]
    fn generator_parse() {
        assert_eq!("dirichlet_column".parse::<Generator>().unwrap(), Generator::DirichletColumn);
        assert_eq!("uniform_rescaled".parse::<Generator>().unwrap(), Generator::UniformRescaled);
        assert!("gauss".parse::<Generator>().is_err());
    }
}
