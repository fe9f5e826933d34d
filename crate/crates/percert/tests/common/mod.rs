//! Test oracles computed by methods independent of the library's own
//! numerical paths: double-double Taylor series for the normal CDF,
//! bisection inversion, cyclic Jacobi eigenvalues for spectral norms,
//! and log-space binomial tail sums for the exact binomial bound.

#![allow(dead_code)]

use percert::{ConfusionMatrix, Matrix};

// ---------------------------------------------------------------------------
// Double-double arithmetic (roughly 31 significant digits).
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

impl Dd {
    pub fn from_f64(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let err = b - (s - a);
    (s, err)
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let err = a.mul_add(b, -p);
    (p, err)
}

pub fn dd_add(a: Dd, b: Dd) -> Dd {
    let (s, e) = two_sum(a.hi, b.hi);
    let (hi, lo) = quick_two_sum(s, e + a.lo + b.lo);
    Dd { hi, lo }
}

pub fn dd_mul(a: Dd, b: Dd) -> Dd {
    let (p, e) = two_prod(a.hi, b.hi);
    let (hi, lo) = quick_two_sum(p, e + a.hi * b.lo + a.lo * b.hi);
    Dd { hi, lo }
}

pub fn dd_mul_f64(a: Dd, b: f64) -> Dd {
    let (p, e) = two_prod(a.hi, b);
    let (hi, lo) = quick_two_sum(p, e + a.lo * b);
    Dd { hi, lo }
}

pub fn dd_div_f64(a: Dd, b: f64) -> Dd {
    let q1 = a.hi / b;
    let (p, e) = two_prod(q1, b);
    let q2 = ((a.hi - p) + (a.lo - e)) / b;
    let (hi, lo) = quick_two_sum(q1, q2);
    Dd { hi, lo }
}

/// 2/√π to double-double precision.
const TWO_OVER_SQRT_PI: Dd = Dd { hi: 1.1283791670955126, lo: 1.533545961316588e-17 };
/// 1/√2 to double-double precision.
const INV_SQRT_2: Dd = Dd { hi: core::f64::consts::FRAC_1_SQRT_2, lo: -4.833646656726457e-17 };

/// erf via its Taylor series in double-double arithmetic.  Converges
/// to far beyond f64 precision for |z| ≤ 6, which covers every
/// quantile this suite touches.
fn erf_dd(z: Dd) -> Dd {
    let z2 = dd_mul(z, z);
    // u_n = (-1)^n z^(2n+1) / n!, accumulated as u_n / (2n+1).
    let mut u = z;
    let mut sum = z;
    for n in 1..200 {
        u = dd_div_f64(dd_mul(u, z2), n as f64).neg();
        let term = dd_div_f64(u, (2 * n + 1) as f64);
        sum = dd_add(sum, term);
        if term.hi.abs() < 1e-40 * sum.hi.abs().max(1e-300) {
            break;
        }
    }
    dd_mul(TWO_OVER_SQRT_PI, sum)
}

/// Standard normal CDF to near double-double accuracy.
pub fn normal_cdf_oracle(x: f64) -> f64 {
    let z = dd_mul_f64(INV_SQRT_2, x.abs());
    let erf = erf_dd(z);
    if x >= 0.0 {
        // 0.5 * (1 + erf)
        dd_mul_f64(dd_add(Dd::from_f64(1.0), erf), 0.5).to_f64()
    } else {
        // 0.5 * (1 - erf), with the subtraction done in dd.
        dd_mul_f64(dd_add(Dd::from_f64(1.0), erf.neg()), 0.5).to_f64()
    }
}

/// Standard normal quantile by bisection on the series CDF.
pub fn normal_quantile_oracle(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile oracle domain");
    let (mut lo, mut hi) = (-9.0_f64, 9.0_f64);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if normal_cdf_oracle(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

// ---------------------------------------------------------------------------
// Jacobi eigenvalues and spectral norms.
// ---------------------------------------------------------------------------

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    if n == 1 {
        return vec![a[0][0]];
    }
    let scale: f64 = a
        .iter()
        .flat_map(|row| row.iter().map(|v| v * v))
        .sum::<f64>()
        .max(1e-300);
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off <= 1e-28 * scale {
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (theta * theta + 1.0).sqrt())
                } else {
                    -1.0 / (-theta + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i][i]).collect()
}

fn gram_spectral_norm(rows: usize, cols: usize, get: impl Fn(usize, usize) -> f64) -> f64 {
    let mut gram = vec![vec![0.0; cols]; cols];
    for j in 0..cols {
        for k in 0..cols {
            let mut sum = 0.0;
            for i in 0..rows {
                sum += get(i, j) * get(i, k);
            }
            gram[j][k] = sum;
        }
    }
    jacobi_eigenvalues(gram)
        .into_iter()
        .fold(0.0_f64, f64::max)
        .max(0.0)
        .sqrt()
}

/// Largest singular value of a dense matrix via the Jacobi Gram oracle.
pub fn spectral_norm_oracle(m: &Matrix) -> f64 {
    gram_spectral_norm(m.rows(), m.cols(), |i, j| m.get(i, j))
}

/// Largest singular value of a confusion matrix via the same oracle.
pub fn confusion_spectral_oracle(c: &ConfusionMatrix) -> f64 {
    gram_spectral_norm(c.dim(), c.dim(), |i, j| c.get(i, j))
}

// ---------------------------------------------------------------------------
// Exact binomial machinery.
// ---------------------------------------------------------------------------

/// P(X >= k) for X ~ Binomial(n, p), summed in log space.
pub fn binomial_tail_ge(n: u64, k: u64, p: f64) -> f64 {
    assert!((0.0..=1.0).contains(&p));
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    if p == 0.0 {
        return 0.0;
    }
    if p == 1.0 {
        return 1.0;
    }
    let n_us = n as usize;
    let mut ln_fact = vec![0.0_f64; n_us + 1];
    for i in 1..=n_us {
        ln_fact[i] = ln_fact[i - 1] + (i as f64).ln();
    }
    let ln_p = p.ln();
    let ln_q = (1.0 - p).ln();
    let terms: Vec<f64> = (k..=n)
        .map(|i| {
            ln_fact[n_us] - ln_fact[i as usize] - ln_fact[(n - i) as usize]
                + i as f64 * ln_p
                + (n - i) as f64 * ln_q
        })
        .collect();
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = terms.iter().map(|t| (t - m).exp()).sum();
    (m + sum.ln()).exp().min(1.0)
}

/// One-sided lower binomial confidence bound by bisection on the exact
/// tail: the p solving P(Bin(n, p) >= k) = alpha.
pub fn clopper_pearson_oracle(k: u64, n: u64, alpha: f64) -> f64 {
    assert!(k <= n && n > 0);
    if k == 0 {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if binomial_tail_ge(n, k, mid) < alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
