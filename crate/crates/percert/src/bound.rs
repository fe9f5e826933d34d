//! Weight-norm diagnostic for the worst-class generalization bound.
//!
//! Φ aggregates architecture and weight norms:
//!   Φ = B²·n²·h·ln(nh) · ∏‖W_l‖₂² · Σ(‖W_l‖_F²/‖W_l‖₂²)
//! with B the largest input ℓ₂ norm, n the layer count, h the widest
//! layer.  The reported bound value plugs Φ into
//!   √( μ²·d_y·[Φ + ln(n·m_min/δ)] / ((m_min − 8·d_y)·γ²) )
//! with μ at its worst case √d_y.  Constants hidden by the O(·) remain
//! unknown, so the value is a comparative scale, not a certificate.

use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::matrix::{POWER_ITERATION_CAP, POWER_ITERATION_TOL};
use crate::nn::Network;

/// Spectral and Frobenius norm of one layer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerNorms {
    pub spectral: f64,
    pub frobenius: f64,
}

/// Output of [`bound_diagnostics`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundDiagnostics {
    pub phi: f64,
    pub per_layer: Vec<LayerNorms>,
    pub input_bound_b: f64,
    pub n_layers: usize,
    pub max_width_h: usize,
    pub m_min: u64,
    pub d_y: usize,
    pub gamma: f64,
    pub delta: f64,
    /// μ²·d_y·[Φ + ln(n·m_min/δ)] / ((m_min − 8·d_y)·γ²), square-rooted,
    /// with μ = √d_y.
    pub bound_rhs: f64,
}

/// Per-layer norms of the bias-folded weight matrices.
pub fn layer_norms(net: &Network) -> Vec<LayerNorms> {
    net.layers()
        .iter()
        .map(|w| LayerNorms {
            spectral: w.spectral_norm(POWER_ITERATION_CAP, POWER_ITERATION_TOL),
            frobenius: w.frobenius_norm(),
        })
        .collect()
}

/// Φ for a given input bound B.  A network with any zero layer has
/// Φ = 0 (its spectral product vanishes and the ratio term is taken
/// as 0 for that layer).
pub fn phi_diagnostic(net: &Network, b: f64) -> f64 {
    let norms = layer_norms(net);
    let n = norms.len() as f64;
    let h = net
        .layers()
        .iter()
        .map(|w| w.rows())
        .max()
        .unwrap_or(0) as f64;
    let mut prod = 1.0;
    let mut ratio_sum = 0.0;
    for ln in &norms {
        prod *= ln.spectral * ln.spectral;
        if ln.spectral > 0.0 {
            ratio_sum += (ln.frobenius * ln.frobenius) / (ln.spectral * ln.spectral);
        }
    }
    b * b * n * n * h * (n * h).ln() * prod * ratio_sum
}

/// Evaluate Φ and the bound scale on a dataset.
///
/// Errors when γ ≤ 0, δ ∉ (0,1), or m_min ≤ 8·d_y (the bound's
/// denominator is nonpositive, so the statement is vacuous).
pub fn bound_diagnostics(
    net: &Network,
    dataset: &Dataset,
    gamma: f64,
    delta: f64,
) -> Result<BoundDiagnostics> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidInput("gamma must be positive".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidInput("delta must lie in (0, 1)".into()));
    }
    let d_y = net.num_classes();
    let m_min = dataset.min_class_count();
    if m_min <= 8 * d_y as u64 {
        return Err(Error::Numeric(format!(
            "bound is vacuous: m_min = {m_min} must exceed 8·d_y = {}",
            8 * d_y
        )));
    }
    let b = dataset.max_row_norm();
    let per_layer = layer_norms(net);
    let n_layers = per_layer.len();
    let max_width_h = net.layers().iter().map(|w| w.rows()).max().unwrap_or(0);
    let phi = phi_diagnostic(net, b);
    let mu_sq = d_y as f64; // worst case μ = √d_y
    let log_term = (n_layers as f64 * m_min as f64 / delta).ln();
    let numerator = mu_sq * d_y as f64 * (phi + log_term);
    let denominator = (m_min as f64 - 8.0 * d_y as f64) * gamma * gamma;
    let bound_rhs = (numerator / denominator).sqrt();
    Ok(BoundDiagnostics {
        phi,
        per_layer,
        input_bound_b: b,
        n_layers,
        max_width_h,
        m_min,
        d_y,
        gamma,
        delta,
        bound_rhs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;

    /// 4-unit single layer with ‖W‖₂ = 2, ‖W‖_F = 3: singular values
    /// (2, 2, 1, 0) on the diagonal, bias column zero.
    fn example_net() -> Network {
        let mut w = Matrix::zeros(4, 5);
        w.set(0, 0, 2.0);
        w.set(1, 1, 2.0);
        w.set(2, 2, 1.0);
        w.set(3, 3, 0.0);
        Network::from_layers(vec![w], 4).unwrap()
    }

    fn unit_ball_dataset(samples_per_class: usize) -> Dataset {
        // 4 classes, unit-norm rows, so B = 1 and m_min is controllable.
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for c in 0..4usize {
            for s in 0..samples_per_class {
                let mut row = vec![0.0; 4];
                row[c] = if s % 2 == 0 { 1.0 } else { -1.0 };
                rows.push(row);
                labels.push(c);
            }
        }
        Dataset::new(Matrix::from_rows(&rows).unwrap(), labels, 4).unwrap()
    }

    #[test]
    fn phi_single_layer_hand_value() {
        // B=1, n=1, h=4: Φ = 4·ln(4)·‖W‖₂²·(‖W‖_F²/‖W‖₂²) = 4·ln4·4·(9/4).
        let net = example_net();
        let phi = phi_diagnostic(&net, 1.0);
        let expect = 36.0 * 4.0_f64.ln();
        assert!((phi - expect).abs() < 1e-9, "phi = {phi}, expect = {expect}");
    }

    #[test]
    fn phi_quadruples_under_weight_doubling() {
        let net = example_net();
        let phi1 = phi_diagnostic(&net, 1.0);
        let mut doubled = net.clone();
        for layer in doubled.layers_mut() {
            for v in layer.as_mut_slice() {
                *v *= 2.0;
            }
        }
        let phi2 = phi_diagnostic(&doubled, 1.0);
        assert_eq!(phi2, 4.0 * phi1);
    }

    #[test]
    fn phi_zero_network_is_zero() {
        let w = Matrix::zeros(3, 3);
        let net = Network::from_layers(vec![w], 2).unwrap();
        assert_eq!(phi_diagnostic(&net, 1.0), 0.0);
    }

    #[test]
    fn diagnostics_report_norms_and_rhs() {
        let net = example_net();
        let ds = unit_ball_dataset(40); // m_min = 40 > 32 = 8·d_y
        let d = bound_diagnostics(&net, &ds, 0.1, 0.05).unwrap();
        assert_eq!(d.m_min, 40);
        assert_eq!(d.d_y, 4);
        assert_eq!(d.n_layers, 1);
        assert_eq!(d.max_width_h, 4);
        assert!((d.input_bound_b - 1.0).abs() < 1e-12);
        assert!((d.per_layer[0].spectral - 2.0).abs() < 1e-9);
        assert!((d.per_layer[0].frobenius - 3.0).abs() < 1e-12);
        let phi = 36.0 * 4.0_f64.ln();
        let expect =
            (16.0 * (phi + (40.0_f64 / 0.05).ln()) / ((40.0 - 32.0) * 0.01)).sqrt();
        assert!((d.bound_rhs - expect).abs() < 1e-9, "rhs = {}", d.bound_rhs);
    }

    #[test]
    fn vacuous_bound_is_an_error() {
        let net = example_net();
        let ds = unit_ball_dataset(8); // m_min = 8 <= 32
        match bound_diagnostics(&net, &ds, 0.1, 0.05) {
            Err(Error::Numeric(msg)) => assert!(msg.contains("vacuous"), "{msg}"),
            other => panic!("expected numeric error, got {other:?}"),
        }
    }

    #[test]
    fn bad_gamma_delta_rejected() {
        let net = example_net();
        let ds = unit_ball_dataset(40);
        assert!(bound_diagnostics(&net, &ds, 0.0, 0.05).is_err());
        assert!(bound_diagnostics(&net, &ds, 0.1, 0.0).is_err());
        assert!(bound_diagnostics(&net, &ds, 0.1, 1.0).is_err());
    }
}
