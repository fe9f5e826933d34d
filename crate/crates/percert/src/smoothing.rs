//! Smoothed prediction and Monte Carlo certification.
//!
//! The smoothed classifier answers with the class the base network
//! picks most often under Gaussian input noise.  Certification lower-
//! bounds the top-class probability from vote counts (one-sided exact
//! binomial bound) and converts it into an ℓ₂ radius via the Gaussian
//! quantile.  Noise draw `j` for a given input always occupies counter
//! block `j` of that input's stream, so results are independent of the
//! parallel schedule.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{argmax, forward, Network};
use crate::rng::{gaussian_words, RngStream};

/// Parameters governing Monte Carlo smoothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingConfig {
    /// Noise standard deviation σ_v (input units).  Zero is permitted
    /// as the degenerate no-noise case used by reductions and tests.
    pub sigma_v: f64,
    /// Selection draws N₀ (candidate-class vote).
    pub n_selection: u64,
    /// Estimation draws N (confidence-bound vote).
    pub n_estimation: u64,
    /// Certificate failure probability α.
    pub alpha: f64,
    /// Margin γ (logit units); must be 0 when certifying unseen data.
    pub gamma: f64,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        SmoothingConfig {
            sigma_v: 0.25,
            n_selection: 100,
            n_estimation: 1000,
            alpha: 0.001,
            gamma: 0.0,
        }
    }
}

impl SmoothingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_v >= 0.0 && self.sigma_v.is_finite()) {
            return Err(Error::InvalidInput("sigma_v must be finite and >= 0".into()));
        }
        if self.n_selection < 1 || self.n_estimation < 1 {
            return Err(Error::InvalidInput("sample counts must be >= 1".into()));
        }
        if self.n_estimation < self.n_selection {
            return Err(Error::InvalidInput(
                "n_estimation must be >= n_selection".into(),
            ));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidInput("alpha must lie in (0, 1)".into()));
        }
        if self.gamma < 0.0 {
            return Err(Error::InvalidInput("gamma must be >= 0".into()));
        }
        Ok(())
    }
}

/// Result of certifying one input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationOutcome {
    /// Certified class, or `None` for abstention.
    pub prediction: Option<usize>,
    /// One-sided lower confidence bound on the top-class probability.
    pub p_a_lower: f64,
    /// Certified ℓ₂ radius; 0 on abstention.
    pub radius: f64,
    /// Total noise draws consumed (selection + estimation).
    pub samples_used: u64,
}

impl CertificationOutcome {
    pub fn is_abstain(&self) -> bool {
        self.prediction.is_none()
    }
}

// ---------------------------------------------------------------------------
// Gaussian quantile.
// ---------------------------------------------------------------------------

/// Complementary error function, Cody-style rational approximations.
/// Relative accuracy ~1e-15 on the positive axis.
fn erfc(x: f64) -> f64 {
    let y = x.abs();
    let result = if y <= 0.46875 {
        // erfc = 1 − erf on the central interval.
        const A: [f64; 5] = [
            3.16112374387056560e0,
            1.13864154151050156e2,
            3.77485237685302021e2,
            3.20937758913846947e3,
            1.85777706184603153e-1,
        ];
        const B: [f64; 4] = [
            2.36012909523441209e1,
            2.44024637934444173e2,
            1.28261652607737228e3,
            2.84423683343917062e3,
        ];
        let z = y * y;
        let mut num = A[4] * z;
        let mut den = z;
        for i in 0..3 {
            num = (num + A[i]) * z;
            den = (den + B[i]) * z;
        }
        let erf = x * (num + A[3]) / (den + B[3]);
        return 1.0 - erf;
    } else if y <= 4.0 {
        const C: [f64; 9] = [
            5.64188496988670089e-1,
            8.88314979438837594e0,
            6.61191906371416295e1,
            2.98635138197400131e2,
            8.81952221241769090e2,
            1.71204761263407058e3,
            2.05107837782607147e3,
            1.23033935479799725e3,
            2.15311535474403846e-8,
        ];
        const D: [f64; 8] = [
            1.57449261107098347e1,
            1.17693950891312499e2,
            5.37181101862009858e2,
            1.62138957456669019e3,
            3.29079923573345963e3,
            4.36261909014324716e3,
            3.43936767414372164e3,
            1.23033935480374942e3,
        ];
        let mut num = C[8] * y;
        let mut den = y;
        for i in 0..7 {
            num = (num + C[i]) * y;
            den = (den + D[i]) * y;
        }
        exp_mxx(y) * (num + C[7]) / (den + D[7])
    } else {
        const P: [f64; 6] = [
            3.05326634961232344e-1,
            3.60344899949804439e-1,
            1.25781726111229246e-1,
            1.60837851487422766e-2,
            6.58749161529837803e-4,
            1.63153871373020978e-2,
        ];
        const Q: [f64; 5] = [
            2.56852019228982242e0,
            1.87295284992346047e0,
            5.27905102951428412e-1,
            6.05183413124413191e-2,
            2.33520497626869185e-3,
        ];
        const INV_SQRT_PI: f64 = 5.64189583547756287e-1;
        let z = 1.0 / (y * y);
        let mut num = P[5] * z;
        let mut den = z;
        for i in 0..4 {
            num = (num + P[i]) * z;
            den = (den + Q[i]) * z;
        }
        let r = z * (num + P[4]) / (den + Q[4]);
        exp_mxx(y) * (INV_SQRT_PI - r) / y
    };
    if x < 0.0 {
        2.0 - result
    } else {
        result
    }
}

/// exp(−y²) split as exp(−y₀²)·exp(−(y−y₀)(y+y₀)) with y₀ a 1/16 grid
/// point, which keeps the argument of each exp small enough to avoid
/// the squaring from amplifying rounding error.
#[inline]
fn exp_mxx(y: f64) -> f64 {
    let y0 = (y * 16.0).trunc() / 16.0;
    let del = (y - y0) * (y + y0);
    (-y0 * y0).exp() * (-del).exp()
}

/// Standard normal CDF via erfc; accurate in both tails.
fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Rational initial guess for the normal quantile on (0, 0.5].
/// Absolute error below ~1.2e-9; one Halley step later removes it.
fn quantile_guess(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383577518672690e2,
        -3.066479806614716e1,
        2.506628277459239e0,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838e0,
        -2.549732539343734e0,
        4.374664141464968e0,
        2.938163982698783e0,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-3,
        3.224671290700398e-1,
        2.445134137142996e0,
        3.754408661907416e0,
    ];
    const P_LOW: f64 = 0.02425;
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

/// Inverse standard normal CDF Ψ⁻¹(p), absolute error below 1e-9.
///
/// A rational approximation supplies the starting point; one Halley
/// step against the erfc-based CDF finishes the job.  The upper half
/// is reflected through `Ψ⁻¹(p) = −Ψ⁻¹(1−p)`; since `1−p` is exact for
/// p ≥ 1/2, the symmetry identity holds to the last bit.
pub fn inverse_normal_cdf(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("quantile argument {p} outside (0, 1)")));
    }
    if p > 0.5 {
        return Ok(-quantile_half(1.0 - p));
    }
    Ok(quantile_half(p))
}

/// Quantile for p ∈ (0, 0.5]; result ≤ 0.
fn quantile_half(p: f64) -> f64 {
    let x = quantile_guess(p);
    // Halley refinement: e = Φ(x) − p, u = e/φ(x).
    let u = (normal_cdf(x) - p) * (2.0 * std::f64::consts::PI).sqrt() * (0.5 * x * x).exp();
    if !u.is_finite() {
        return x; // |x| ≳ 38: beyond refinement, guess stands.
    }
    x - u / (1.0 + x * u / 2.0)
}

/// Certified ℓ₂ radius of the two-sided form:
/// `max(0, (σ/2)·(Ψ⁻¹(p_a_low) − Ψ⁻¹(p_b_high)))`.
pub fn certified_radius(p_a_low: f64, p_b_high: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!("sigma {sigma} must be positive")));
    }
    if !(p_b_high > 0.0 && p_a_low < 1.0 && p_b_high <= p_a_low) {
        return Err(Error::Domain(format!(
            "need 0 < p_b_high <= p_a_low < 1, got ({p_a_low}, {p_b_high})"
        )));
    }
    let r = sigma / 2.0 * (inverse_normal_cdf(p_a_low)? - inverse_normal_cdf(p_b_high)?);
    Ok(r.max(0.0))
}

// ---------------------------------------------------------------------------
// Exact binomial lower confidence bound.
// ---------------------------------------------------------------------------

/// ln Γ(x) for x > 0 (Lanczos, g = 7).
fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.99999999999980993,
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    debug_assert!(x > 0.0);
    let z = x - 1.0;
    let mut a = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (z + i as f64);
    }
    let t = z + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + a.ln()
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn betacf(a: f64, b: f64, x: f64) -> f64 {
    const FPMIN: f64 = 1e-300;
    const EPS: f64 = 3e-16;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=300 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function I_x(a, b).
fn inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_bt = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let bt = ln_bt.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        bt * betacf(a, b, x) / a
    } else {
        1.0 - bt * betacf(b, a, 1.0 - x) / b
    }
}

/// One-sided Clopper–Pearson lower confidence bound: the largest p̲
/// with `P(Bin(n, p̲) ≥ k) = α`, i.e. the root of
/// `I_p(k, n−k+1) = α`, found by bisection.  Returns 0 for k = 0.
pub fn clopper_pearson_lower(k: u64, n: u64, alpha: f64) -> Result<f64> {
    if n == 0 || k > n {
        return Err(Error::Domain(format!("invalid binomial counts k={k}, n={n}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha {alpha} outside (0, 1)")));
    }
    if k == 0 {
        return Ok(0.0);
    }
    let a = k as f64;
    let b = (n - k) as f64 + 1.0;
    // I_p(a, b) rises monotonically from 0 to 1 on p ∈ [0, 1].
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if inc_beta(a, b, mid) < alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

// ---------------------------------------------------------------------------
// Monte Carlo prediction and certification.
// ---------------------------------------------------------------------------

/// Per-draw winner under the margin rule: the true class `y` wins only
/// when its logit clears the strongest wrong class by more than γ;
/// otherwise that wrong class wins (lowest index on ties).
pub(crate) fn margin_winner(logits: &[f64], y: usize, gamma: f64) -> usize {
    let mut runner = usize::MAX;
    for (i, &v) in logits.iter().enumerate() {
        if i == y {
            continue;
        }
        if runner == usize::MAX || v > logits[runner] {
            runner = i;
        }
    }
    if runner == usize::MAX {
        return y; // single-class degenerate case
    }
    if logits[y] > logits[runner] + gamma {
        y
    } else {
        runner
    }
}

/// Winner of each of `draws` noise draws, mapped through `decide`.
/// Draw `j` reads counter block `[base + j·w, base + (j+1)·w)` of the
/// stream, so the result is schedule-independent; the stream advances
/// past all consumed blocks.
fn noise_draw_winners<F>(
    net: &Network,
    x: &[f64],
    sigma: f64,
    draws: u64,
    stream: &mut RngStream,
    decide: F,
) -> Result<Vec<usize>>
where
    F: Fn(&[f64]) -> usize + Sync,
{
    if x.len() != net.input_dim() {
        return Err(Error::DimensionMismatch(format!(
            "input length {} but network expects {}",
            x.len(),
            net.input_dim()
        )));
    }
    let w = gaussian_words(net.input_dim());
    let (seed, sid, base) = (stream.seed(), stream.stream_id(), stream.counter());
    let winners: Vec<usize> = (0..draws)
        .into_par_iter()
        .map(|j| {
            let mut s = RngStream::with_counter(seed, sid, base + j * w);
            let v = s.gaussian_vector(x.len(), sigma);
            let noisy: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + b).collect();
            let logits = forward(net, &noisy).expect("input length checked above");
            decide(&logits)
        })
        .collect();
    stream.jump_to(base + draws * w);
    Ok(winners)
}

/// Vote counts of the smoothed classifier: `cfg.n_estimation` noise
/// draws, each voting for the argmax class of the perturbed forward
/// pass (ties toward the lowest index).
pub fn smoothed_predict(
    net: &Network,
    x: &[f64],
    cfg: &SmoothingConfig,
    stream: &mut RngStream,
) -> Result<Vec<u64>> {
    cfg.validate()?;
    let winners = noise_draw_winners(net, x, cfg.sigma_v, cfg.n_estimation, stream, |l| argmax(l))?;
    let mut counts = vec![0u64; net.num_classes()];
    for c in winners {
        counts[c] += 1;
    }
    Ok(counts)
}

/// Plurality class of the margin-smoothed classifier over
/// `cfg.n_estimation` draws; `y_hint` is the training label whose wins
/// require a margin of γ.  Count ties break toward the lowest index.
pub fn margin_smoothed_predict(
    net: &Network,
    x: &[f64],
    y_hint: usize,
    gamma: f64,
    cfg: &SmoothingConfig,
    stream: &mut RngStream,
) -> Result<usize> {
    cfg.validate()?;
    if y_hint >= net.num_classes() {
        return Err(Error::InvalidInput(format!(
            "class hint {} out of range for {} classes",
            y_hint,
            net.num_classes()
        )));
    }
    if gamma < 0.0 {
        return Err(Error::InvalidInput("gamma must be >= 0".into()));
    }
    let winners = noise_draw_winners(net, x, cfg.sigma_v, cfg.n_estimation, stream, |l| {
        margin_winner(l, y_hint, gamma)
    })?;
    let mut counts = vec![0u64; net.num_classes()];
    for c in winners {
        counts[c] += 1;
    }
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate().skip(1) {
        if c > counts[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Two-phase Monte Carlo certification of one input.
///
/// `cfg.n_selection` draws pick the candidate class; `cfg.n_estimation`
/// fresh draws (disjoint counter blocks of the same stream) count its
/// votes.  The vote count yields the exact one-sided lower bound p̲_a;
/// if p̲_a > 1/2 the certified radius is `σ·Ψ⁻¹(p̲_a)`, otherwise the
/// procedure abstains.
pub fn certify(
    net: &Network,
    x: &[f64],
    cfg: &SmoothingConfig,
    stream: &mut RngStream,
) -> Result<CertificationOutcome> {
    cfg.validate()?;
    let selection = smoothed_predict(net, x, &SmoothingConfig {
        n_estimation: cfg.n_selection,
        ..cfg.clone()
    }, stream)?;
    let c_hat = {
        let mut best = 0;
        for (i, &c) in selection.iter().enumerate().skip(1) {
            if c > selection[best] {
                best = i;
            }
        }
        best
    };
    let estimation = smoothed_predict(net, x, cfg, stream)?;
    let k = estimation[c_hat];
    let p_a_lower = clopper_pearson_lower(k, cfg.n_estimation, cfg.alpha)?;
    let samples_used = cfg.n_selection + cfg.n_estimation;
    if p_a_lower > 0.5 {
        let radius = (cfg.sigma_v * inverse_normal_cdf(p_a_lower)?).max(0.0);
        Ok(CertificationOutcome { prediction: Some(c_hat), p_a_lower, radius, samples_used })
    } else {
        Ok(CertificationOutcome { prediction: None, p_a_lower, radius: 0.0, samples_used })
    }
}
