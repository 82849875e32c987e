//! Reference KLIEP computations written directly from the definitions, with
//! explicit loops and no code shared with the library's dense kernels.

use mnchange::seed::rng_from_seed;
use mnchange::{FeatureMap, KliepProblem, SampleMatrix};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Rows of per-sample features in the library's flat order (pairs `u ≥ v`,
/// column-major lower triangle, `b` entries per pair).
pub fn feature_rows(x: &SampleMatrix, fmap: &FeatureMap) -> Vec<Vec<f64>> {
    let (m, b) = (x.m(), fmap.dim());
    let mut out = Vec::with_capacity(x.n());
    let mut buf = vec![0.0; b];
    for i in 0..x.n() {
        let row = x.row(i);
        let mut f = Vec::new();
        for v in 0..m {
            for u in v..m {
                fmap.eval(row[u], row[v], &mut buf);
                f.extend_from_slice(&buf);
            }
        }
        out.push(f);
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Normalized importance weights over Q, `exp(sⱼ) / Σ exp(s)`.
pub fn weights(fq: &[Vec<f64>], theta: &[f64]) -> Vec<f64> {
    let s: Vec<f64> = fq.iter().map(|f| dot(f, theta)).collect();
    let top = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = s.iter().map(|x| (x - top).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|x| x / z).collect()
}

/// `−mean_P ⟨θ, f⟩ + ln Σ_Q exp⟨θ, f⟩ − ln n_q`.
pub fn loss(fp: &[Vec<f64>], fq: &[Vec<f64>], theta: &[f64]) -> f64 {
    let mean_p: f64 = fp.iter().map(|f| dot(f, theta)).sum::<f64>() / fp.len() as f64;
    let s: Vec<f64> = fq.iter().map(|f| dot(f, theta)).collect();
    let top = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = top + s.iter().map(|x| (x - top).exp()).sum::<f64>().ln();
    -mean_p + lse - (fq.len() as f64).ln()
}

pub fn gradient(fp: &[Vec<f64>], fq: &[Vec<f64>], theta: &[f64]) -> Vec<f64> {
    let k = theta.len();
    let w = weights(fq, theta);
    let mut g = vec![0.0; k];
    for f in fp {
        for j in 0..k {
            g[j] -= f[j] / fp.len() as f64;
        }
    }
    for (f, wj) in fq.iter().zip(&w) {
        for j in 0..k {
            g[j] += wj * f[j];
        }
    }
    g
}

/// `Fᵀ (diag(w) − w wᵀ) F`: the log-sum-exp Hessian pulled back through the
/// Q feature matrix.
pub fn laplacian_hessian(fq: &[Vec<f64>], theta: &[f64]) -> DMatrix<f64> {
    let n = fq.len();
    let w = weights(fq, theta);
    let lap = DMatrix::from_fn(n, n, |i, j| if i == j { w[i] - w[i] * w[i] } else { -w[i] * w[j] });
    let f = DMatrix::from_fn(n, theta.len(), |i, j| fq[i][j]);
    f.transpose() * lap * f
}

/// Cyclic coordinate descent for `b = 1`: each coordinate solves its
/// one-dimensional `loss + λ|t|` problem exactly by bisection on the
/// monotone partial derivative. Stops when a full sweep moves no coordinate
/// by more than `tol`.
pub fn coordinate_descent(fp: &[Vec<f64>], fq: &[Vec<f64>], lambda: f64, tol: f64) -> Vec<f64> {
    let k = fp[0].len();
    let mut theta = vec![0.0; k];
    let partial = |theta: &[f64], j: usize, t: f64| {
        let mut th = theta.to_vec();
        th[j] = t;
        gradient(fp, fq, &th)[j]
    };
    for _sweep in 0..10_000 {
        let mut moved: f64 = 0.0;
        for j in 0..k {
            let g0 = partial(&theta, j, 0.0);
            let new = if g0.abs() <= lambda {
                0.0
            } else {
                // root of ∂_j loss + λ sign(t), on the side opposite to g0
                let sign = -g0.signum();
                let h = |t: f64| partial(&theta, j, t) + lambda * sign;
                let (mut lo, mut hi) = (0.0_f64, sign);
                while h(hi) * sign < 0.0 {
                    lo = hi;
                    hi *= 2.0;
                }
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if h(mid) * sign < 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if (hi - lo).abs() < 1e-15 {
                        break;
                    }
                }
                0.5 * (lo + hi)
            };
            moved = moved.max((new - theta[j]).abs());
            theta[j] = new;
        }
        if moved < tol {
            break;
        }
    }
    theta
}

/// Gaussian P and Q samples with a random shift and scaling per coordinate,
/// so the two samples differ.
pub fn random_samples(seed: u64, m: usize, n_p: usize, n_q: usize) -> (SampleMatrix, SampleMatrix) {
    let mut rng = rng_from_seed(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let scale: Vec<f64> = (0..m).map(|_| rng.random_range(0.6..1.4)).collect();
    let mut draw = |n: usize, s: &[f64]| {
        SampleMatrix::new(DMatrix::from_fn(n, m, |_, j| s[j] * normal.sample(&mut rng))).unwrap()
    };
    let p = draw(n_p, &scale);
    let q = draw(n_q, &vec![1.0; m]);
    (p, q)
}

/// Three-output basis used to exercise `b > 1`.
pub fn cubic_features() -> FeatureMap {
    FeatureMap::custom("test-cubic", 3, |a, b, out| {
        out[0] = a * b;
        out[1] = (a + b).tanh();
        out[2] = 0.5 * a * a * b;
    })
    .unwrap()
}

pub fn random_theta(seed: u64, k: usize, scale: f64) -> DVector<f64> {
    let mut rng = rng_from_seed(seed);
    DVector::from_fn(k, |_, _| rng.random_range(-scale..scale))
}

pub fn problem(p: &SampleMatrix, q: &SampleMatrix, fmap: &FeatureMap) -> KliepProblem {
    KliepProblem::new(p, q, fmap.clone()).unwrap()
}
