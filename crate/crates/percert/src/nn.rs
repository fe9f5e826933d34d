//! Feed-forward ReLU network with manual forward/backward passes and a
//! momentum SGD optimizer.
//!
//! Layers store their bias folded in: layer `l` is a `d_l × (d_{l-1}+1)`
//! matrix applied to the previous activation extended by a constant 1.
//! ReLU sits between layers; the final layer emits raw logits.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::RngStream;

/// Loss selectable in [`backward`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Plain softmax cross-entropy.
    CrossEntropy,
    /// Margin cross-entropy surrogate: cross-entropy of the logits
    /// after every wrong class receives a +γ handicap.  γ = 0 reduces
    /// exactly to [`LossKind::CrossEntropy`].
    MarginKlSurrogate,
}

/// The base classifier: an ordered list of bias-folded dense layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Matrix>,
    input_dim: usize,
    num_classes: usize,
}

impl Network {
    /// Assemble from explicit layer matrices.  Layer `l` must have
    /// exactly one more column than layer `l-1` has rows (the bias
    /// column); the first layer's extra column pairs with `input_dim`.
    pub fn from_layers(layers: Vec<Matrix>, input_dim: usize) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidInput("network needs at least one layer".into()));
        }
        let mut prev = input_dim;
        for (l, w) in layers.iter().enumerate() {
            if w.cols() != prev + 1 {
                return Err(Error::DimensionMismatch(format!(
                    "layer {} expects input width {}, got matrix with {} columns",
                    l,
                    prev + 1,
                    w.cols()
                )));
            }
            prev = w.rows();
        }
        let num_classes = prev;
        Ok(Network { layers, input_dim, num_classes })
    }

    /// He-uniform initialization: weights U(±√(6/fan_in)) with fan_in
    /// the layer input width, bias column zero.  `dims` lists every
    /// width from input to output, e.g. `[2, 64, 64, 5]`.
    pub fn random(dims: &[usize], stream: &mut RngStream) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::InvalidInput(
                "network shape needs an input and an output width".into(),
            ));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidInput("zero-width layer".into()));
        }
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let scale = (6.0 / fan_in as f64).sqrt();
            let mut m = Matrix::zeros(fan_out, fan_in + 1);
            for i in 0..fan_out {
                for j in 0..fan_in {
                    m.set(i, j, (2.0 * stream.next_uniform() - 1.0) * scale);
                }
                // Bias column stays 0.
            }
            layers.push(m);
        }
        Network::from_layers(layers, dims[0])
    }

    pub fn layers(&self) -> &[Matrix] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Matrix] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Widths from input to output, the inverse of [`Network::random`]'s
    /// `dims` argument.
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim];
        dims.extend(self.layers.iter().map(Matrix::rows));
        dims
    }
}

/// Apply `W` to `[a; 1]` without materializing the extended vector.
fn affine(w: &Matrix, a: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; w.rows()];
    let d = a.len();
    for (i, o) in out.iter_mut().enumerate() {
        let row = w.row(i);
        *o = row[..d].iter().zip(a).map(|(x, y)| x * y).sum::<f64>() + row[d];
    }
    out
}

/// Pre-softmax logits of the network at `x`.  Pure: identical inputs
/// give bit-identical outputs.
pub fn forward(net: &Network, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != net.input_dim {
        return Err(Error::DimensionMismatch(format!(
            "input length {} but network expects {}",
            x.len(),
            net.input_dim
        )));
    }
    let last = net.layers.len() - 1;
    let mut a = x.to_vec();
    for (l, w) in net.layers.iter().enumerate() {
        let mut z = affine(w, &a);
        if l < last {
            for v in &mut z {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        a = z;
    }
    Ok(a)
}

/// Numerically stable softmax (max subtraction).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / z).collect()
}

/// log(Σ exp(logits)) with max subtraction.
fn log_sum_exp(logits: &[f64]) -> f64 {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + logits.iter().map(|&v| (v - m).exp()).sum::<f64>().ln()
}

/// Margin cross-entropy surrogate:
/// `−log softmax(logits + γ·(1 − onehot(y)))[y]`.
///
/// Every class except `y` gets a +γ handicap before the softmax, so the
/// loss stays high until the true logit clears the runner-up by γ.
/// γ = 0 is ordinary cross-entropy; the value is always ≥ 0.
pub fn margin_kl_surrogate_loss(logits: &[f64], y: usize, gamma: f64) -> Result<f64> {
    if y >= logits.len() {
        return Err(Error::InvalidInput(format!(
            "class index {} out of range for {} logits",
            y,
            logits.len()
        )));
    }
    if gamma < 0.0 {
        return Err(Error::InvalidInput("margin must be nonnegative".into()));
    }
    let shifted: Vec<f64> = logits
        .iter()
        .enumerate()
        .map(|(k, &v)| if k == y { v } else { v + gamma })
        .collect();
    Ok(log_sum_exp(&shifted) - shifted[y])
}

/// Loss and per-layer weight gradients at a single sample.
///
/// Gradients come from manual backpropagation through the fixed MLP
/// graph.  The ReLU subgradient at exactly 0 is taken as 0.
pub fn backward(
    net: &Network,
    x: &[f64],
    y: usize,
    loss_kind: LossKind,
    gamma: f64,
) -> Result<(Vec<Matrix>, f64)> {
    if x.len() != net.input_dim {
        return Err(Error::DimensionMismatch(format!(
            "input length {} but network expects {}",
            x.len(),
            net.input_dim
        )));
    }
    if y >= net.num_classes {
        return Err(Error::InvalidInput(format!(
            "class index {} out of range for {} classes",
            y, net.num_classes
        )));
    }
    let gamma = match loss_kind {
        LossKind::CrossEntropy => 0.0,
        LossKind::MarginKlSurrogate => gamma,
    };

    // Forward pass caching every activation; acts[l] feeds layer l.
    let last = net.layers.len() - 1;
    let mut acts: Vec<Vec<f64>> = Vec::with_capacity(net.layers.len() + 1);
    acts.push(x.to_vec());
    for (l, w) in net.layers.iter().enumerate() {
        let mut z = affine(w, &acts[l]);
        if l < last {
            for v in &mut z {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        acts.push(z);
    }
    let logits = &acts[net.layers.len()];
    let loss = margin_kl_surrogate_loss(logits, y, gamma)?;

    // dL/dlogits = softmax(shifted) − onehot(y).
    let shifted: Vec<f64> = logits
        .iter()
        .enumerate()
        .map(|(k, &v)| if k == y { v } else { v + gamma })
        .collect();
    let mut delta = softmax(&shifted);
    delta[y] -= 1.0;

    let mut grads: Vec<Matrix> = net.layers.iter().map(|w| Matrix::zeros(w.rows(), w.cols())).collect();
    for l in (0..net.layers.len()).rev() {
        let a = &acts[l];
        let g = &mut grads[l];
        for i in 0..g.rows() {
            let di = delta[i];
            if di != 0.0 {
                let row = g.row_mut(i);
                for (j, &aj) in a.iter().enumerate() {
                    row[j] += di * aj;
                }
                row[a.len()] += di; // Bias column sees the constant 1.
            }
        }
        if l > 0 {
            let w = &net.layers[l];
            let mut prev = vec![0.0; a.len()];
            for i in 0..w.rows() {
                let di = delta[i];
                if di != 0.0 {
                    let row = w.row(i);
                    for (p, r) in prev.iter_mut().zip(&row[..a.len()]) {
                        *p += di * r;
                    }
                }
            }
            // acts[l] already holds ReLU output; its zeros kill the
            // gradient exactly where the unit was inactive.
            for (p, &av) in prev.iter_mut().zip(a) {
                if av <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
    }
    Ok((grads, loss))
}

/// Optimizer state: network plus one velocity buffer per layer.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub network: Network,
    velocity: Vec<Matrix>,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub step: u64,
}

impl TrainState {
    pub fn new(network: Network, learning_rate: f64, momentum: f64, weight_decay: f64) -> Result<Self> {
        if learning_rate <= 0.0 {
            return Err(Error::InvalidInput("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::InvalidInput("momentum must lie in [0, 1)".into()));
        }
        if weight_decay < 0.0 {
            return Err(Error::InvalidInput("weight decay must be nonnegative".into()));
        }
        let velocity = network
            .layers()
            .iter()
            .map(|w| Matrix::zeros(w.rows(), w.cols()))
            .collect();
        Ok(TrainState { network, velocity, learning_rate, momentum, weight_decay, step: 0 })
    }
}

/// One classic-momentum step with decoupled weight decay:
/// `v ← m·v + g`, then `W ← W − lr·v − lr·wd·W`.
pub fn sgd_step(state: &mut TrainState, gradients: &[Matrix]) -> Result<()> {
    if gradients.len() != state.network.layers().len() {
        return Err(Error::DimensionMismatch(format!(
            "{} gradient matrices for {} layers",
            gradients.len(),
            state.network.layers().len()
        )));
    }
    let lr = state.learning_rate;
    let m = state.momentum;
    let wd = state.weight_decay;
    for ((w, v), g) in state
        .network
        .layers_mut()
        .iter_mut()
        .zip(&mut state.velocity)
        .zip(gradients)
    {
        if w.rows() != g.rows() || w.cols() != g.cols() {
            return Err(Error::DimensionMismatch("gradient shape differs from layer".into()));
        }
        let (wd_, vd, gd) = (w.as_mut_slice(), v.as_mut_slice(), g.as_slice());
        for ((wi, vi), gi) in wd_.iter_mut().zip(vd).zip(gd) {
            *vi = m * *vi + gi;
            *wi -= lr * *vi + lr * wd * *wi;
        }
    }
    state.step += 1;
    Ok(())
}

/// Argmax with ties broken toward the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
