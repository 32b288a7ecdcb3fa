//! Reference implementations used to cross-check the library. Everything
//! here is written from the defining formulas with dense linear algebra and
//! naive loops; none of it calls into the code under test except for plain
//! data types.
#![allow(dead_code)]

use feeler_core::preference::ComparisonRecord;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

pub fn phi(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

pub fn big_phi(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

pub fn kernel(a: &[f64], b: &[f64], width: f64) -> f64 {
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-sq / (2.0 * width * width)).exp()
}

pub fn gram(xs: &[Vec<f64>], width: f64, jitter: f64) -> DMatrix<f64> {
    let n = xs.len();
    DMatrix::from_fn(n, n, |i, j| {
        kernel(&xs[i], &xs[j], width) + if i == j { jitter } else { 0.0 }
    })
}

/// Dot product with error-free transformations, accurate to about one
/// rounding of the exact result.
pub fn dot_compensated(a: &[f64], b: &[f64]) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for (x, y) in a.iter().zip(b) {
        let p = x * y;
        let pe = x.mul_add(*y, -p);
        let t = s + p;
        let z = t - s;
        c += (s - (t - z)) + (p - z) + pe;
        s = t;
    }
    s + c
}

/// Dense LU solve followed by iterative refinement with compensated
/// residuals. A plain explicit inverse loses ~cond(K)·ε·‖x‖, which at
/// jitter 1e-4 is already 1e-8.
pub fn solve_refined(k: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let lu = k.clone().lu();
    let mut x = lu.solve(b).expect("invertible gram");
    for _ in 0..4 {
        let r = DVector::from_iterator(
            b.len(),
            (0..b.len()).map(|i| {
                let row: Vec<f64> = k.row(i).iter().copied().collect();
                b[i] - dot_compensated(&row, x.as_slice())
            }),
        );
        x += lu.solve(&r).expect("invertible gram");
    }
    x
}

/// Posterior mean and variance from dense refined solves against `K + σ²I`.
pub fn dense_gp(
    xs: &[Vec<f64>],
    y: &[f64],
    width: f64,
    jitter: f64,
    query: &[f64],
) -> (f64, f64) {
    let kmat = gram(xs, width, jitter);
    let mean_y = y.iter().sum::<f64>() / y.len() as f64;
    let yc = DVector::from_iterator(y.len(), y.iter().map(|v| v - mean_y));
    let k: Vec<f64> = xs.iter().map(|x| kernel(x, query, width)).collect();
    let alpha = solve_refined(&kmat, &yc);
    let beta = solve_refined(&kmat, &DVector::from_vec(k.clone()));
    let mean = mean_y + dot_compensated(&k, alpha.as_slice());
    let var = 1.0 - dot_compensated(&k, beta.as_slice());
    (mean, var)
}

/// `-½ yᵀK⁻¹y - ½ ln det K - (n/2) ln 2π` with the determinant from LU.
pub fn dense_log_marginal(xs: &[Vec<f64>], y: &[f64], width: f64, jitter: f64) -> f64 {
    let k = gram(xs, width, jitter);
    let det = k.clone().lu().determinant();
    let kinv = k.try_inverse().expect("invertible gram");
    let mean_y = y.iter().sum::<f64>() / y.len() as f64;
    let yc = DVector::from_iterator(y.len(), y.iter().map(|v| v - mean_y));
    let n = y.len() as f64;
    -0.5 * (yc.transpose() * kinv * &yc)[(0, 0)] - 0.5 * det.ln() - 0.5 * n * (2.0 * PI).ln()
}

/// `E[max(0, Z - best)]` for `Z ~ N(mean, std²)` from antithetic pairs.
pub fn ei_monte_carlo<R: Rng>(mean: f64, std: f64, best: f64, samples: usize, rng: &mut R) -> f64 {
    let pairs = samples / 2;
    let mut sum = 0.0;
    for _ in 0..pairs {
        let z: f64 = StandardNormal.sample(rng);
        sum += (mean + std * z - best).max(0.0) + (mean - std * z - best).max(0.0);
    }
    sum / (2 * pairs) as f64
}

/// `Σ ln Φ((g_w - g_l)/(√2δ))`.
pub fn log_lik(relations: &[ComparisonRecord], g: &[f64], noise: f64) -> f64 {
    relations
        .iter()
        .map(|r| big_phi((g[r.winner] - g[r.loser]) / (SQRT_2 * noise)).ln())
        .sum()
}

fn log_lik_grad(relations: &[ComparisonRecord], g: &[f64], noise: f64) -> Vec<f64> {
    let c = 1.0 / (SQRT_2 * noise);
    let mut grad = vec![0.0; g.len()];
    for r in relations {
        let s = c * (g[r.winner] - g[r.loser]);
        let t = c * phi(s) / big_phi(s);
        grad[r.winner] += t;
        grad[r.loser] -= t;
    }
    grad
}

/// MAP of `z(g)` by plain gradient ascent in whitened coordinates
/// `g = L v`, where the objective is `ln P(R | Lv) - ½|v|²`. The step is
/// fixed at the reciprocal of a curvature bound, so no line search or
/// Hessian solve is involved.
pub fn map_by_gradient_ascent(relations: &[ComparisonRecord], k: &DMatrix<f64>, noise: f64) -> Vec<f64> {
    let n = k.nrows();
    let l = k.clone().cholesky().expect("positive definite").l();
    let c2 = 1.0 / (2.0 * noise * noise);
    // λ(λ+s) ≤ 1, so each relation adds at most 2c² to ‖Ω‖
    let bound = 1.0 + k.norm() * 2.0 * c2 * relations.len() as f64;
    let step = 1.0 / bound;
    let mut v = DVector::<f64>::zeros(n);
    for _ in 0..2_000_000 {
        let g = &l * &v;
        let gl = DVector::from_vec(log_lik_grad(relations, g.as_slice(), noise));
        let grad = l.transpose() * gl - &v;
        if grad.amax() < 1e-11 {
            break;
        }
        v += step * grad;
    }
    (&l * v).as_slice().to_vec()
}

/// `-∂² ln P(R|g)` by central second differences of the function value.
pub fn omega_by_differences(relations: &[ComparisonRecord], g: &[f64], noise: f64, h: f64) -> DMatrix<f64> {
    let n = g.len();
    let f = |shift: &[(usize, f64)]| {
        let mut x = g.to_vec();
        for &(i, d) in shift {
            x[i] += d;
        }
        -log_lik(relations, &x, noise)
    };
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            (f(&[(i, h)]) - 2.0 * f(&[]) + f(&[(i, -h)])) / (h * h)
        } else {
            (f(&[(i, h), (j, h)]) - f(&[(i, h), (j, -h)]) - f(&[(i, -h), (j, h)])
                + f(&[(i, -h), (j, -h)]))
                / (4.0 * h * h)
        }
    })
}

/// `ln ∫ N(g; 0, K) P(R|g) dg` for three items by a midpoint rule over the
/// whitened cube `[-r, r]³`.
pub fn log_evidence_quadrature(
    relations: &[ComparisonRecord],
    k: &DMatrix<f64>,
    noise: f64,
    half_width: f64,
    points: usize,
) -> f64 {
    assert_eq!(k.nrows(), 3);
    let l = k.clone().cholesky().expect("positive definite").l();
    let h = 2.0 * half_width / points as f64;
    let nodes: Vec<f64> = (0..points).map(|i| -half_width + (i as f64 + 0.5) * h).collect();
    let weights: Vec<f64> = nodes.iter().map(|&v| phi(v) * h).collect();
    let c = 1.0 / (SQRT_2 * noise);
    let mut total = 0.0;
    for (a, wa) in nodes.iter().zip(&weights) {
        for (b, wb) in nodes.iter().zip(&weights) {
            for (d, wd) in nodes.iter().zip(&weights) {
                let v = [*a, *b, *d];
                let g: Vec<f64> = (0..3)
                    .map(|i| (0..=i).map(|j| l[(i, j)] * v[j]).sum())
                    .collect();
                let lik: f64 = relations
                    .iter()
                    .map(|r| big_phi(c * (g[r.winner] - g[r.loser])))
                    .product();
                total += wa * wb * wd * lik;
            }
        }
    }
    total.ln()
}

/// `(1/K) Σ_i (s_i / i) Σ_{j≤i} s_j`, positions from 1.
pub fn average_precision(label_order: &[String], pred_order: &[String], k: usize) -> f64 {
    let relevant: Vec<&String> = label_order.iter().take(k).collect();
    let s: Vec<f64> = pred_order
        .iter()
        .map(|id| if relevant.contains(&id) { 1.0 } else { 0.0 })
        .collect();
    let mut total = 0.0;
    for i in 1..=s.len() {
        let cum: f64 = s[..i].iter().sum();
        total += (s[i - 1] / i as f64) * cum;
    }
    total / k as f64
}

/// DCG ratio with fold gains `n - j + 1` for fold `j` of size `⌊N/n⌋` and
/// zero gain past the last full fold.
pub fn ndcg(label_order: &[String], pred_order: &[String], folds: usize) -> f64 {
    let m = label_order.len() / folds;
    let gain = |id: &String| {
        let pos = label_order.iter().position(|x| x == id).unwrap();
        let fold = pos / m + 1;
        if fold <= folds {
            (folds - fold + 1) as i32
        } else {
            0
        }
    };
    let dcg = |order: &[String]| -> f64 {
        let mut total = 0.0;
        for i in 1..=order.len() {
            total += (2f64.powi(gain(&order[i - 1])) - 1.0) / ((i + 1) as f64).log2();
        }
        total
    };
    dcg(pred_order) / dcg(label_order)
}

/// Random comparison relations over `n` items: distinct unordered pairs,
/// each with a random winner.
pub fn random_relations<R: Rng>(n: usize, count: usize, rng: &mut R) -> Vec<ComparisonRecord> {
    let mut pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    use rand::seq::SliceRandom;
    pairs.shuffle(rng);
    pairs
        .into_iter()
        .take(count)
        .map(|(i, j)| {
            let (winner, loser) = if rng.random_bool(0.5) { (i, j) } else { (j, i) };
            let votes_winner = rng.random_range(11..=20);
            ComparisonRecord {
                winner,
                loser,
                votes_winner,
                votes_loser: 20 - votes_winner,
            }
        })
        .collect()
}

pub fn random_points<R: Rng>(n: usize, d: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect()
}
