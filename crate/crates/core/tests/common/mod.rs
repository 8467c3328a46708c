//! Reference implementations used as oracles. Deliberately naive: plain `Vec`
//! arithmetic, explicit inverses, quadrature and bisection.

#![allow(dead_code)]

use ipred::fbl::q_function;
use ipred::gp::{RbfKernel, TrainingSet};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub type Mat = Vec<Vec<f64>>;

pub fn rbf(sf: f64, l: f64, a: f64, b: f64) -> f64 {
    sf * sf * (-(a - b) * (a - b) / (2.0 * l * l)).exp()
}

pub fn gram(sf: f64, l: f64, a: &[f64], b: &[f64]) -> Mat {
    a.iter().map(|&x| b.iter().map(|&y| rbf(sf, l, x, y)).collect()).collect()
}

/// Gauss-Jordan inverse with partial pivoting. Also returns `log |det a|`.
pub fn gauss_jordan(a: &Mat) -> (Mat, f64) {
    let n = a.len();
    let mut m: Mat = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    let mut log_det = 0.0;
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        m.swap(col, piv);
        let p = m[col][col];
        assert!(p != 0.0, "singular matrix");
        log_det += p.abs().ln();
        for v in m[col].iter_mut() {
            *v /= p;
        }
        let pivot_row = m[col].clone();
        for (i, row) in m.iter_mut().enumerate() {
            if i != col {
                let f = row[col];
                if f != 0.0 {
                    for (v, pv) in row.iter_mut().zip(&pivot_row) {
                        *v -= f * pv;
                    }
                }
            }
        }
    }
    (m.into_iter().map(|r| r[n..].to_vec()).collect(), log_det)
}

pub fn matvec(a: &Mat, x: &[f64]) -> Vec<f64> {
    a.iter().map(|r| r.iter().zip(x).map(|(p, q)| p * q).sum()).collect()
}

/// Posterior mean and covariance via an explicit inverse of `K + diag I`.
pub fn posterior(sf: f64, l: f64, diag: f64, x: &[f64], y: &[f64], q: &[f64]) -> (Vec<f64>, Mat) {
    let mut k = gram(sf, l, x, x);
    for (i, row) in k.iter_mut().enumerate() {
        row[i] += diag;
    }
    let (inv, _) = gauss_jordan(&k);
    let ks = gram(sf, l, q, x);
    let kss = gram(sf, l, q, q);
    let alpha = matvec(&inv, y);
    let mean = ks.iter().map(|r| r.iter().zip(&alpha).map(|(p, a)| p * a).sum()).collect();
    let cov = (0..q.len())
        .map(|i| {
            let w = matvec(&inv, &ks[i]);
            (0..q.len())
                .map(|j| kss[i][j] - ks[j].iter().zip(&w).map(|(p, a)| p * a).sum::<f64>())
                .collect()
        })
        .collect();
    (mean, cov)
}

pub fn log_marginal_likelihood(sf: f64, l: f64, diag: f64, x: &[f64], y: &[f64]) -> f64 {
    let mut k = gram(sf, l, x, x);
    for (i, row) in k.iter_mut().enumerate() {
        row[i] += diag;
    }
    let (inv, log_det) = gauss_jordan(&k);
    let quad: f64 = y.iter().zip(matvec(&inv, y)).map(|(a, b)| a * b).sum();
    -0.5 * quad - 0.5 * log_det - 0.5 * y.len() as f64 * (2.0 * std::f64::consts::PI).ln()
}

fn normal_pdf(t: f64) -> f64 {
    (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `Q(x)` by composite Simpson quadrature of the normal density over `[x, max(x, 0) + 40]`.
pub fn q_quadrature(x: f64) -> f64 {
    let a = x;
    let b = x.max(0.0) + 40.0;
    let n = 40_000;
    let h = (b - a) / n as f64;
    let mut s = normal_pdf(a) + normal_pdf(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * normal_pdf(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Inverse of [`q_quadrature`] by bisection on `[-40, 40]`.
pub fn q_inverse_bisection(p: f64) -> f64 {
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if q_quadrature(mid) > p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Normal-approximation error written out from its definition.
pub fn error_after(d: f64, r: u64, delta: f64) -> f64 {
    let c = (1.0 + delta).log2();
    let v = (1.0 - 1.0 / ((1.0 + delta) * (1.0 + delta))) * std::f64::consts::LOG2_E.powi(2);
    let r = r as f64;
    q_function((r * c - d) / (r * v).sqrt())
}

/// Smallest blocklength meeting `target`, by scanning upward from one.
pub fn scan_min_channel_uses(d: f64, delta: f64, target: f64) -> u64 {
    let mut r = 1u64;
    while error_after(d, r, delta) > target {
        r += 1;
    }
    r
}

/// Kolmogorov-Smirnov statistic of `samples` against the unit exponential.
pub fn ks_unit_exponential(samples: &[f64]) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = 1.0 - (-x).exp();
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Two-sided 1 % KS critical value for large `n`.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.627_6 / (n as f64).sqrt()
}

/// Random well-posed regression problem with up to `n` distinct inputs and a few queries.
pub fn random_problem(rng: &mut ChaCha8Rng, n: usize) -> (RbfKernel, TrainingSet, Vec<f64>) {
    let k = RbfKernel::new(rng.random_range(0.3..3.0), rng.random_range(0.5..5.0)).unwrap();
    let mut x: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..30.0)).collect();
    x.sort_by(f64::total_cmp);
    x.dedup();
    let y: Vec<f64> = x.iter().map(|_| rng.random_range(-2.0..2.0)).collect();
    let noise = rng.random_range(1e-3..0.5) * k.variance();
    let q: Vec<f64> = (0..rng.random_range(1..15)).map(|_| rng.random_range(-5.0..35.0)).collect();
    (k, TrainingSet::new(x, y, noise).unwrap(), q)
}
