//! Certified-accuracy evaluation: per-radius curves, worst-class
//! metrics, class spread, and the spectral summary of the test-time
//! confusion matrix.

use rayon::prelude::*;
use serde::Serialize;

use crate::bound::phi_diagnostic;
use crate::confusion::{build_smoothed_confusion_matrix, max_column_sum, top_singular_triple};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::matrix::POWER_ITERATION_TOL;
use crate::nn::{argmax, forward, Network};
use crate::rng::RngStream;
use crate::smoothing::{certify, CertificationOutcome, SmoothingConfig};

/// Noise draws behind the reported test confusion matrix.
pub const CONFUSION_DRAWS: u64 = 100;

/// Stream id offset reserved for confusion passes, far above any
/// per-sample certification stream.
const CONFUSION_STREAM_BASE: u64 = 1 << 40;

/// Evaluation results for one noise level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SigmaEval {
    pub sigma: f64,
    /// Certified accuracy at each radius, all classes pooled.
    pub overall: Vec<f64>,
    /// Certified accuracy per class (outer index) per radius (inner).
    pub per_class: Vec<Vec<f64>>,
    /// Curve of the class the base model is worst on.
    pub worst_class_pre_curve: Vec<f64>,
    /// Per-radius minimum over classes (post-hoc worst class).
    pub posthoc_min: Vec<f64>,
    /// Standard deviation across the per-class accuracies per radius.
    pub class_std: Vec<f64>,
    pub abstention_rate: f64,
    /// σ_max of the smoothed confusion matrix on this test set (γ=0).
    pub confusion_sigma_max: f64,
    pub confusion_max_column_sum: f64,
}

/// Full evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub smoothing: SmoothingConfig,
    pub seed: u64,
    pub radii: Vec<f64>,
    /// Class with the lowest clean accuracy of the base model.
    pub worst_class_pre: usize,
    /// Weight-norm diagnostic at the test set's input bound.
    pub phi: f64,
    pub per_sigma: Vec<SigmaEval>,
}

/// Class with the lowest clean (noise-free) accuracy of the base
/// model; ties break toward the lowest index.
pub fn identify_worst_class(net: &Network, dataset: &Dataset) -> Result<usize> {
    dataset.require_all_classes()?;
    let d = dataset.num_classes();
    let mut correct = vec![0u64; d];
    let counts = dataset.class_counts();
    for i in 0..dataset.len() {
        let logits = forward(net, dataset.feature(i))?;
        if argmax(&logits) == dataset.label(i) {
            correct[dataset.label(i)] += 1;
        }
    }
    let mut worst = 0;
    let mut worst_acc = f64::INFINITY;
    for c in 0..d {
        let acc = correct[c] as f64 / counts[c] as f64;
        if acc < worst_acc {
            worst_acc = acc;
            worst = c;
        }
    }
    Ok(worst)
}

/// Certified accuracy over a radius grid: a sample scores at radius r
/// when its certified prediction equals its label and its radius is at
/// least r; abstentions never score.
fn accuracy_curves(
    outcomes: &[CertificationOutcome],
    dataset: &Dataset,
    radii: &[f64],
) -> (Vec<f64>, Vec<Vec<f64>>) {
    let d = dataset.num_classes();
    let counts = dataset.class_counts();
    let mut per_class = vec![vec![0.0; radii.len()]; d];
    for (i, out) in outcomes.iter().enumerate() {
        let label = dataset.label(i);
        if out.prediction == Some(label) {
            for (r, &radius) in radii.iter().enumerate() {
                if out.radius >= radius {
                    per_class[label][r] += 1.0;
                }
            }
        }
    }
    for (c, row) in per_class.iter_mut().enumerate() {
        for v in row.iter_mut() {
            *v /= counts[c] as f64;
        }
    }
    let mut overall = vec![0.0; radii.len()];
    for (c, row) in per_class.iter().enumerate() {
        for (r, v) in row.iter().enumerate() {
            overall[r] += v * counts[c] as f64;
        }
    }
    let m = dataset.len() as f64;
    for v in &mut overall {
        *v /= m;
    }
    (overall, per_class)
}

/// Two-pass population standard deviation.
fn std_dev(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

/// Certify every test point at every σ and aggregate.
///
/// Point `i` at σ index `k` uses stream `k·m + i` of `seed`; the
/// test-confusion pass of σ index `k` uses a reserved stream far above
/// those.  Results are therefore independent of evaluation order and
/// worker count.
pub fn evaluate_certified(
    net: &Network,
    dataset_test: &Dataset,
    sigmas: &[f64],
    radii: &[f64],
    cfg: &SmoothingConfig,
    seed: u64,
) -> Result<EvalReport> {
    cfg.validate()?;
    dataset_test.require_all_classes()?;
    if sigmas.is_empty() || radii.is_empty() {
        return Err(Error::InvalidInput("need at least one sigma and one radius".into()));
    }
    let m = dataset_test.len();
    let worst_class_pre = identify_worst_class(net, dataset_test)?;
    let phi = phi_diagnostic(net, dataset_test.max_row_norm());
    let mut per_sigma = Vec::with_capacity(sigmas.len());
    for (k, &sigma) in sigmas.iter().enumerate() {
        if !(sigma >= 0.0) {
            return Err(Error::InvalidInput(format!("sigma {sigma} must be >= 0")));
        }
        let run_cfg = SmoothingConfig { sigma_v: sigma, gamma: 0.0, ..cfg.clone() };
        let outcomes: Result<Vec<CertificationOutcome>> = (0..m)
            .into_par_iter()
            .map(|i| {
                let mut stream = RngStream::new(seed, (k * m + i) as u64);
                certify(net, dataset_test.feature(i), &run_cfg, &mut stream)
            })
            .collect();
        let outcomes = outcomes?;
        let (overall, per_class) = accuracy_curves(&outcomes, dataset_test, radii);
        let abstained = outcomes.iter().filter(|o| o.is_abstain()).count();
        let posthoc_min: Vec<f64> = (0..radii.len())
            .map(|r| per_class.iter().map(|row| row[r]).fold(f64::INFINITY, f64::min))
            .collect();
        let class_std: Vec<f64> = (0..radii.len())
            .map(|r| std_dev(&per_class.iter().map(|row| row[r]).collect::<Vec<_>>()))
            .collect();
        let mut confusion_stream = RngStream::new(seed, CONFUSION_STREAM_BASE + k as u64);
        let confusion = build_smoothed_confusion_matrix(
            net,
            dataset_test,
            0.0,
            sigma,
            CONFUSION_DRAWS,
            &mut confusion_stream,
        )?;
        let triple = top_singular_triple(&confusion, POWER_ITERATION_TOL);
        per_sigma.push(SigmaEval {
            sigma,
            worst_class_pre_curve: per_class[worst_class_pre].clone(),
            overall,
            per_class,
            posthoc_min,
            class_std,
            abstention_rate: abstained as f64 / m as f64,
            confusion_sigma_max: triple.sigma_max,
            confusion_max_column_sum: max_column_sum(&confusion),
        });
    }
    Ok(EvalReport {
        smoothing: cfg.clone(),
        seed,
        radii: radii.to_vec(),
        worst_class_pre,
        phi,
        per_sigma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticSpec};
    use crate::matrix::Matrix;

    /// Nearest-center linear classifier for the 3-cluster toy task.
    fn ideal_net() -> Network {
        let mut rows = Vec::new();
        for j in 0..3 {
            let angle = 2.0 * std::f64::consts::PI * j as f64 / 3.0;
            rows.push(vec![angle.cos(), angle.sin(), 0.0]);
        }
        Network::from_layers(vec![Matrix::from_rows(&rows).unwrap()], 2).unwrap()
    }

    fn toy_dataset() -> Dataset {
        generate_synthetic(
            &SyntheticSpec {
                num_classes: 3,
                sizes: vec![15, 15, 15],
                dim: 2,
                radius: 4.0,
                spread: 0.2,
                overlap: 0.0,
            },
            13,
        )
        .unwrap()
    }

    #[test]
    fn worst_class_fully_misclassified() {
        // Net whose class-2 logit is a constant -100.
        let w = Matrix::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, -100.0],
        ])
        .unwrap();
        let net = Network::from_layers(vec![w], 2).unwrap();
        let ds = toy_dataset();
        assert_eq!(identify_worst_class(&net, &ds).unwrap(), 2);
    }

    #[test]
    fn worst_class_tie_takes_lowest_index() {
        let ds = toy_dataset();
        assert_eq!(identify_worst_class(&ideal_net(), &ds).unwrap(), 0);
    }

    #[test]
    fn worst_class_matches_recount() {
        let mut s = RngStream::new(5, 0);
        let net = Network::random(&[2, 6, 3], &mut s).unwrap();
        let ds = toy_dataset();
        let got = identify_worst_class(&net, &ds).unwrap();
        let mut errs = vec![0usize; 3];
        let mut totals = vec![0usize; 3];
        for i in 0..ds.len() {
            let logits = forward(&net, ds.feature(i)).unwrap();
            totals[ds.label(i)] += 1;
            if argmax(&logits) != ds.label(i) {
                errs[ds.label(i)] += 1;
            }
        }
        let rates: Vec<f64> = errs
            .iter()
            .zip(&totals)
            .map(|(&e, &t)| e as f64 / t as f64)
            .collect();
        let mut expect = 0;
        for c in 1..3 {
            if rates[c] > rates[expect] {
                expect = c;
            }
        }
        assert_eq!(got, expect);
    }

    #[test]
    fn perfect_classifier_tiny_noise_scores_one_at_radius_zero() {
        let ds = toy_dataset();
        let cfg = SmoothingConfig {
            sigma_v: 0.0,
            n_selection: 20,
            n_estimation: 100,
            alpha: 0.01,
            gamma: 0.0,
        };
        let report =
            evaluate_certified(&ideal_net(), &ds, &[1e-6], &[0.0], &cfg, 3).unwrap();
        let s = &report.per_sigma[0];
        assert_eq!(s.overall, vec![1.0]);
        assert_eq!(s.class_std, vec![0.0]);
        assert_eq!(s.abstention_rate, 0.0);
    }

    #[test]
    fn curves_are_non_increasing_in_radius() {
        let ds = toy_dataset();
        let cfg = SmoothingConfig {
            n_selection: 20,
            n_estimation: 200,
            ..Default::default()
        };
        let radii = [0.0, 0.1, 0.25, 0.5, 1.0];
        let report =
            evaluate_certified(&ideal_net(), &ds, &[0.25, 0.5], &radii, &cfg, 7).unwrap();
        for s in &report.per_sigma {
            for row in s.per_class.iter().chain([&s.overall]) {
                for w in row.windows(2) {
                    assert!(w[0] >= w[1], "curve increased: {row:?}");
                }
            }
        }
    }

    #[test]
    fn report_is_internally_consistent() {
        let ds = toy_dataset();
        let cfg = SmoothingConfig { n_selection: 20, n_estimation: 100, ..Default::default() };
        let radii = [0.0, 0.2];
        let report = evaluate_certified(&ideal_net(), &ds, &[0.3], &radii, &cfg, 11).unwrap();
        let s = &report.per_sigma[0];
        let counts = ds.class_counts();
        for (r, &overall) in s.overall.iter().enumerate() {
            let weighted: f64 = s
                .per_class
                .iter()
                .zip(&counts)
                .map(|(row, &c)| row[r] * c as f64)
                .sum::<f64>()
                / ds.len() as f64;
            assert!((overall - weighted).abs() < 1e-9);
            let min = s
                .per_class
                .iter()
                .map(|row| row[r])
                .fold(f64::INFINITY, f64::min);
            assert_eq!(s.posthoc_min[r], min);
            assert!(s.worst_class_pre_curve[r] >= min);
        }
    }

    #[test]
    fn evaluation_is_deterministic() {
        let ds = toy_dataset();
        let cfg = SmoothingConfig { n_selection: 10, n_estimation: 50, ..Default::default() };
        let a = evaluate_certified(&ideal_net(), &ds, &[0.25], &[0.0, 0.1], &cfg, 9).unwrap();
        let b = evaluate_certified(&ideal_net(), &ds, &[0.25], &[0.0, 0.1], &cfg, 9).unwrap();
        assert_eq!(a, b);
    }
}
