//! Stage-2 comparison-tuning model: a GP over latent utilities learned from
//! pairwise preferences with a probit likelihood and a Laplace posterior.
//!
//! For a relation `i ▷ j` the likelihood is `Φ((g_i - g_j)/(√2 δ))`. The
//! MAP point maximizes
//!
//! ```text
//! z(g) = Σ ln Φ((g_i - g_j)/(√2 δ)) - ½ gᵀ K⁻¹ g
//! ```
//!
//! and the posterior is approximated by `N(g*, (Ω* + K⁻¹)⁻¹)` with `Ω*` the
//! Hessian of the negative log-likelihood at `g*`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design_space::{DesignSpace, DesignVector, UnitVector};
use crate::gp::{cross_kernel, gram, KernelNorm, KernelParams, Prediction, Predictor};
use crate::linalg::{Cholesky, NotPositiveDefinite};
use crate::normal;
use crate::seed;

/// Diagonal jitter added to the item Gram matrix before any inversion.
pub const GRAM_JITTER: f64 = 1e-8;

const LOG_PARAM_MIN: f64 = -6.907_755_278_982_137; // ln 1e-3
const LOG_PARAM_MAX: f64 = 4.605_170_185_988_092; // ln 1e2

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PreferenceError {
    #[error("invalid dataset: {0}")]
    Dataset(String),
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("MAP estimation did not converge after {iterations} iterations (gradient norm {grad_norm:e})")]
    Convergence { iterations: usize, grad_norm: f64 },
    #[error("item gram matrix {0}")]
    NotPositiveDefinite(#[from] NotPositiveDefinite),
}

/// `winner ▷ loser`, decided by majority vote.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonRecord {
    pub winner: usize,
    pub loser: usize,
    pub votes_winner: u32,
    pub votes_loser: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub id: usize,
    pub vector: UnitVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDataset")]
pub struct ComparisonDataset {
    items: Vec<Item>,
    relations: Vec<ComparisonRecord>,
}

#[derive(Deserialize)]
struct RawDataset {
    items: Vec<Item>,
    relations: Vec<ComparisonRecord>,
}

impl TryFrom<RawDataset> for ComparisonDataset {
    type Error = PreferenceError;
    fn try_from(raw: RawDataset) -> Result<Self, Self::Error> {
        Self::new(raw.items, raw.relations)
    }
}

impl ComparisonDataset {
    /// Items must carry the dense ids `0..n` in order.
    pub fn new(items: Vec<Item>, relations: Vec<ComparisonRecord>) -> Result<Self, PreferenceError> {
        for (i, item) in items.iter().enumerate() {
            if item.id != i {
                return Err(PreferenceError::Dataset(format!(
                    "items[{i}] has id {}, expected {i}",
                    item.id
                )));
            }
            if let Some(first) = items.first() {
                if item.vector.len() != first.vector.len() {
                    return Err(PreferenceError::Dataset(format!(
                        "items[{i}] has dimension {}, expected {}",
                        item.vector.len(),
                        first.vector.len()
                    )));
                }
            }
        }
        let n = items.len();
        for (m, r) in relations.iter().enumerate() {
            if r.winner >= n || r.loser >= n {
                return Err(PreferenceError::Dataset(format!(
                    "relations[{m}] references an unknown item"
                )));
            }
            if r.winner == r.loser {
                return Err(PreferenceError::Dataset(format!("relations[{m}] is a self-pair")));
            }
            if r.votes_winner <= r.votes_loser {
                return Err(PreferenceError::Dataset(format!(
                    "relations[{m}]: winner has {} votes, loser {}",
                    r.votes_winner, r.votes_loser
                )));
            }
        }
        Ok(Self { items, relations })
    }

    /// Items only, no relations.
    pub fn unlabeled(vectors: Vec<UnitVector>) -> Self {
        Self {
            items: vectors
                .into_iter()
                .enumerate()
                .map(|(id, vector)| Item { id, vector })
                .collect(),
            relations: Vec::new(),
        }
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn relations(&self) -> &[ComparisonRecord] {
        &self.relations
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn vectors(&self) -> Vec<UnitVector> {
        self.items.iter().map(|i| i.vector.clone()).collect()
    }

    /// Gram matrix over items plus [`GRAM_JITTER`] on the diagonal.
    pub fn gram(&self, params: &PreferenceParams) -> DMatrix<f64> {
        let mut k = gram(&self.vectors(), &params.kernel());
        for i in 0..k.nrows() {
            k[(i, i)] += GRAM_JITTER;
        }
        k
    }
}

/// Kernel width Δ and noise standard deviation δ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreferenceParams {
    pub width: f64,
    pub noise: f64,
    #[serde(default)]
    pub norm: KernelNorm,
}

impl PreferenceParams {
    pub fn new(width: f64, noise: f64) -> Result<Self, PreferenceError> {
        let p = Self {
            width,
            noise,
            norm: KernelNorm::L2sq,
        };
        p.check()?;
        Ok(p)
    }

    pub fn check(&self) -> Result<(), PreferenceError> {
        if !(self.width > 0.0 && self.width.is_finite()) {
            return Err(PreferenceError::Params(format!("width must be positive, got {}", self.width)));
        }
        if !(self.noise > 0.0 && self.noise.is_finite()) {
            return Err(PreferenceError::Params(format!("noise must be positive, got {}", self.noise)));
        }
        Ok(())
    }

    pub fn kernel(&self) -> KernelParams {
        KernelParams {
            width: self.width,
            jitter: GRAM_JITTER,
            norm: self.norm,
        }
    }
}

/// `P(i ▷ j | g) = Φ((g_i - g_j)/(√2 δ))`.
pub fn pair_likelihood(g_i: f64, g_j: f64, noise: f64) -> f64 {
    normal::cdf((g_i - g_j) / (std::f64::consts::SQRT_2 * noise))
}

fn scale(noise: f64) -> f64 {
    1.0 / (std::f64::consts::SQRT_2 * noise)
}

/// `Σ ln Φ((g_w - g_l)/(√2 δ))`.
pub fn log_likelihood(relations: &[ComparisonRecord], g: &DVector<f64>, noise: f64) -> f64 {
    let c = scale(noise);
    relations
        .iter()
        .map(|r| normal::ln_cdf(c * (g[r.winner] - g[r.loser])))
        .sum()
}

fn likelihood_gradient(relations: &[ComparisonRecord], g: &DVector<f64>, noise: f64) -> DVector<f64> {
    let c = scale(noise);
    let mut grad = DVector::zeros(g.len());
    for r in relations {
        let t = c * normal::inv_mills(c * (g[r.winner] - g[r.loser]));
        grad[r.winner] += t;
        grad[r.loser] -= t;
    }
    grad
}

/// `Ω = -∂² Σ ln Φ / ∂g²`. Each relation adds `c·[[1,-1],[-1,1]]` on its two
/// items with `c = λ(λ + s)/(2δ²)`, `s` the scaled difference and `λ = φ(s)/Φ(s)`.
pub fn hessian_omega(relations: &[ComparisonRecord], g: &DVector<f64>, noise: f64) -> DMatrix<f64> {
    let c = scale(noise);
    let n = g.len();
    let mut omega = DMatrix::zeros(n, n);
    for r in relations {
        let s = c * (g[r.winner] - g[r.loser]);
        let lambda = normal::inv_mills(s);
        let w = c * c * lambda * (lambda + s);
        omega[(r.winner, r.winner)] += w;
        omega[(r.loser, r.loser)] += w;
        omega[(r.winner, r.loser)] -= w;
        omega[(r.loser, r.winner)] -= w;
    }
    omega
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for MapOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MapResult {
    pub g: DVector<f64>,
    /// `K⁻¹ g`.
    pub a: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub grad_norm: f64,
}

/// Newton ascent on `z(g)`, parametrized as `g = K a` so that `K⁻¹` is
/// never formed. Each step solves `(I + Ω K) b = Ω g + ∇ln P(R|g)` and
/// halves the step along `b - a` until `z` does not decrease.
pub fn map_estimate(
    relations: &[ComparisonRecord],
    k: &DMatrix<f64>,
    noise: f64,
    opts: &MapOptions,
) -> Result<MapResult, PreferenceError> {
    if !(noise > 0.0) {
        return Err(PreferenceError::Params(format!("noise must be positive, got {noise}")));
    }
    if !(opts.tol > 0.0) {
        return Err(PreferenceError::Params("tolerance must be positive".into()));
    }
    let n = k.nrows();
    let objective = |g: &DVector<f64>, a: &DVector<f64>| log_likelihood(relations, g, noise) - 0.5 * g.dot(a);
    let mut a = DVector::zeros(n);
    let mut g = DVector::zeros(n);
    let mut z = objective(&g, &a);
    let identity = DMatrix::<f64>::identity(n, n);
    for iteration in 0..=opts.max_iter {
        let grad_ll = likelihood_gradient(relations, &g, noise);
        let grad_norm = (&grad_ll - &a).amax();
        if grad_norm < opts.tol {
            return Ok(MapResult {
                g,
                a,
                objective: z,
                iterations: iteration,
                grad_norm,
            });
        }
        if iteration == opts.max_iter {
            return Err(PreferenceError::Convergence {
                iterations: iteration,
                grad_norm,
            });
        }
        let omega = hessian_omega(relations, &g, noise);
        let rhs = &omega * &g + grad_ll;
        let system = &identity + &omega * k;
        let b = system.lu().solve(&rhs).ok_or(PreferenceError::Convergence {
            iterations: iteration,
            grad_norm,
        })?;
        let direction = b - &a;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let a_new = &a + t * &direction;
            let g_new = k * &a_new;
            let z_new = objective(&g_new, &a_new);
            if z_new >= z - 1e-12 * (1.0 + z.abs()) {
                a = a_new;
                g = g_new;
                z = z_new;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(PreferenceError::Convergence {
                iterations: iteration,
                grad_norm,
            });
        }
    }
    unreachable!("loop returns on its last iteration")
}

/// `z(g)` evaluated through a Cholesky factor of `K`.
pub fn objective(relations: &[ComparisonRecord], k: &DMatrix<f64>, g: &DVector<f64>, noise: f64) -> Result<f64, PreferenceError> {
    let chol = Cholesky::new(k)?;
    Ok(log_likelihood(relations, g, noise) - 0.5 * g.dot(&chol.solve(g)))
}

/// Laplace approximation of `ln P(R)`:
/// `ln P(R|g*) - ½ g*ᵀK⁻¹g* - ½ ln det(I + K Ω*)`.
pub fn log_evidence(data: &ComparisonDataset, params: &PreferenceParams) -> Result<f64, PreferenceError> {
    params.check()?;
    let k = data.gram(params);
    let map = map_estimate(data.relations(), &k, params.noise, &MapOptions::default())?;
    laplace_log_evidence(data.relations(), &k, &map, params.noise)
}

fn laplace_log_evidence(
    relations: &[ComparisonRecord],
    k: &DMatrix<f64>,
    map: &MapResult,
    noise: f64,
) -> Result<f64, PreferenceError> {
    let n = k.nrows();
    if n == 0 {
        return Ok(0.0);
    }
    let chol = Cholesky::new(k)?;
    let l = chol.factor();
    let omega = hessian_omega(relations, &map.g, noise);
    // det(I + KΩ) = det(I + LᵀΩL), the latter symmetric positive definite
    let mut b = l.transpose() * omega * l;
    for i in 0..n {
        b[(i, i)] += 1.0;
    }
    let half_log_det = Cholesky::new(&b)?.half_log_det();
    Ok(map.objective - half_log_det)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuneOptions {
    pub steps: usize,
    pub learning_rate: f64,
    /// Central-difference step in log-parameter space.
    pub fd_step: f64,
}

impl Default for TuneOptions {
    fn default() -> Self {
        Self {
            steps: 30,
            learning_rate: 0.1,
            fd_step: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneStep {
    pub step: usize,
    pub params: PreferenceParams,
    pub evidence: f64,
    pub accepted: bool,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub params: PreferenceParams,
    pub evidence: f64,
    pub initial_evidence: f64,
    pub trace: Vec<TuneStep>,
}

/// Gradient ascent of the Laplace evidence in `(ln Δ, ln δ)`.
///
/// Gradients are central differences. A step is kept only if the evidence
/// increases; otherwise the learning rate is halved. Trial points whose MAP
/// fails are treated as rejected steps.
pub fn tune_hyperparameters(
    data: &ComparisonDataset,
    init: PreferenceParams,
    opts: &TuneOptions,
) -> Result<TuneResult, PreferenceError> {
    init.check()?;
    let eval = |theta: [f64; 2]| {
        log_evidence(
            data,
            &PreferenceParams {
                width: theta[0].exp(),
                noise: theta[1].exp(),
                norm: init.norm,
            },
        )
    };
    let mut theta = [init.width.ln(), init.noise.ln()];
    let initial_evidence = eval(theta)?;
    let mut best = initial_evidence;
    let mut lr = opts.learning_rate;
    let mut trace = Vec::with_capacity(opts.steps);
    let h = opts.fd_step;
    for step in 0..opts.steps {
        let mut grad = [0.0; 2];
        for (d, g) in grad.iter_mut().enumerate() {
            let mut up = theta;
            let mut down = theta;
            up[d] += h;
            down[d] -= h;
            *g = (eval(up)? - eval(down)?) / (2.0 * h);
        }
        let proposal = [
            (theta[0] + lr * grad[0]).clamp(LOG_PARAM_MIN, LOG_PARAM_MAX),
            (theta[1] + lr * grad[1]).clamp(LOG_PARAM_MIN, LOG_PARAM_MAX),
        ];
        let value = eval(proposal).ok().filter(|v| v.is_finite());
        let accepted = matches!(value, Some(v) if v > best);
        if accepted {
            theta = proposal;
            best = value.expect("accepted value exists");
        } else {
            lr *= 0.5;
        }
        trace.push(TuneStep {
            step,
            params: PreferenceParams {
                width: theta[0].exp(),
                noise: theta[1].exp(),
                norm: init.norm,
            },
            evidence: best,
            accepted,
            learning_rate: lr,
        });
    }
    let params = if trace.iter().any(|s| s.accepted) {
        PreferenceParams {
            width: theta[0].exp(),
            noise: theta[1].exp(),
            norm: init.norm,
        }
    } else {
        init
    };
    Ok(TuneResult {
        params,
        evidence: best,
        initial_evidence,
        trace,
    })
}

/// Persisted form of a preference model; matrices are rebuilt on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceSnapshot {
    pub items: Vec<Item>,
    pub g_star: Vec<f64>,
    pub params: PreferenceParams,
}

/// Finalized stage-2 model.
#[derive(Debug, Clone)]
pub struct PreferenceModel {
    items: Vec<UnitVector>,
    g_star: DVector<f64>,
    /// `K⁻¹ g*`
    a: DVector<f64>,
    omega: DMatrix<f64>,
    /// `(K + Ω*⁻¹)⁻¹`, computed as `(I + Ω* K)⁻¹ Ω*`.
    predictive: DMatrix<f64>,
    params: PreferenceParams,
}

impl PreferenceModel {
    pub fn fit(data: &ComparisonDataset, params: PreferenceParams, opts: &MapOptions) -> Result<Self, PreferenceError> {
        params.check()?;
        let k = data.gram(&params);
        let map = map_estimate(data.relations(), &k, params.noise, opts)?;
        let omega = hessian_omega(data.relations(), &map.g, params.noise);
        Self::assemble(data.vectors(), map.g, &k, omega, params)
    }

    fn assemble(
        items: Vec<UnitVector>,
        g_star: DVector<f64>,
        k: &DMatrix<f64>,
        omega: DMatrix<f64>,
        params: PreferenceParams,
    ) -> Result<Self, PreferenceError> {
        let n = items.len();
        let chol = Cholesky::new(k)?;
        let a = chol.solve(&g_star);
        let system = DMatrix::<f64>::identity(n, n) + &omega * k;
        let mut predictive = system
            .lu()
            .solve(&omega)
            .ok_or_else(|| PreferenceError::Params("I + ΩK is singular".into()))?;
        for i in 0..n {
            for j in 0..i {
                let m = 0.5 * (predictive[(i, j)] + predictive[(j, i)]);
                predictive[(i, j)] = m;
                predictive[(j, i)] = m;
            }
        }
        Ok(Self {
            items,
            g_star,
            a,
            omega,
            predictive,
            params,
        })
    }

    pub fn g_star(&self) -> &DVector<f64> {
        &self.g_star
    }

    pub fn omega(&self) -> &DMatrix<f64> {
        &self.omega
    }

    pub fn params(&self) -> &PreferenceParams {
        &self.params
    }

    pub fn items(&self) -> &[UnitVector] {
        &self.items
    }

    pub fn snapshot(&self) -> PreferenceSnapshot {
        PreferenceSnapshot {
            items: self
                .items
                .iter()
                .enumerate()
                .map(|(id, v)| Item { id, vector: v.clone() })
                .collect(),
            g_star: self.g_star.iter().copied().collect(),
            params: self.params,
        }
    }

    /// Rebuilds `K`, `Ω*` and the predictive matrices from a snapshot.
    pub fn from_snapshot(s: PreferenceSnapshot, relations: &[ComparisonRecord]) -> Result<Self, PreferenceError> {
        s.params.check()?;
        let data = ComparisonDataset::new(s.items, relations.to_vec())?;
        if s.g_star.len() != data.len() {
            return Err(PreferenceError::Dataset(format!(
                "{} items but {} latent values",
                data.len(),
                s.g_star.len()
            )));
        }
        let g = DVector::from_vec(s.g_star);
        let k = data.gram(&s.params);
        let omega = hessian_omega(data.relations(), &g, s.params.noise);
        Self::assemble(data.vectors(), g, &k, omega, s.params)
    }

    /// Cross-covariances with the coincident-point nugget, so that a query
    /// at a training item reproduces its latent value.
    fn cross(&self, u: &UnitVector) -> DVector<f64> {
        let kernel = self.params.kernel();
        let mut k = cross_kernel(&self.items, u, &kernel);
        for (i, item) in self.items.iter().enumerate() {
            if item.sq_distance(u) == 0.0 {
                k[i] += GRAM_JITTER;
            }
        }
        k
    }
}

impl Predictor for PreferenceModel {
    /// `u = kᵀK⁻¹g*`, `σ² = κ - kᵀ(K + Ω*⁻¹)⁻¹k` clamped to `[0, κ]`.
    fn predict(&self, u: &UnitVector) -> Prediction {
        let k = self.cross(u);
        let mean = k.dot(&self.a);
        let variance = (1.0 - k.dot(&(&self.predictive * &k))).clamp(0.0, 1.0);
        Prediction { mean, variance }
    }

    fn predict_mean(&self, u: &UnitVector) -> f64 {
        self.cross(u).dot(&self.a)
    }
}

/// Top-`n` solutions of a large uniform pool and the pairs drawn among them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    /// Raw vectors in rank order; the position is the item id.
    pub vectors: Vec<DesignVector>,
    pub items: Vec<Item>,
    /// Stage-1 posterior mean of each item.
    pub scores: Vec<f64>,
    /// Unordered pairs `(i, j)`, `i < j`.
    pub pairs: Vec<(usize, usize)>,
}

/// Samples `n_pool` uniform vectors, keeps the `n_top` with the highest
/// posterior mean (earlier sample first on ties), then draws `n_pairs`
/// distinct unordered pairs, or with replacement if more are requested than
/// exist.
pub fn generate_candidate_pairs<P: Predictor + ?Sized>(
    model: &P,
    space: &DesignSpace,
    n_pool: usize,
    n_top: usize,
    n_pairs: usize,
    seed: u64,
) -> Result<CandidateSet, PreferenceError> {
    if n_top > n_pool {
        return Err(PreferenceError::Params(format!(
            "cannot keep {n_top} of {n_pool} samples"
        )));
    }
    if n_top < 2 {
        return Err(PreferenceError::Params("at least two items are needed to form pairs".into()));
    }
    if n_pairs == 0 {
        return Err(PreferenceError::Params("at least one pair is required".into()));
    }
    let pool = space.sample_uniform(seed::child_seed(seed, "pool"), n_pool);
    let mut scored: Vec<(usize, f64, UnitVector)> = pool
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let u = space.normalize(v).expect("sample has space dimension");
            (i, model.predict_mean(&u), u)
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(n_top);

    let mut rng = seed::rng(seed::child_seed(seed, "pairs"));
    let total = n_top * (n_top - 1) / 2;
    let indices: Vec<usize> = if n_pairs <= total {
        rand::seq::index::sample(&mut rng, total, n_pairs).into_vec()
    } else {
        use rand::Rng;
        (0..n_pairs).map(|_| rng.random_range(0..total)).collect()
    };
    let pairs = indices.into_iter().map(|p| unrank_pair(p, n_top)).collect();

    Ok(CandidateSet {
        vectors: scored.iter().map(|(i, _, _)| pool[*i].clone()).collect(),
        scores: scored.iter().map(|(_, s, _)| *s).collect(),
        items: scored
            .into_iter()
            .enumerate()
            .map(|(id, (_, _, vector))| Item { id, vector })
            .collect(),
        pairs,
    })
}

/// Maps `0..n(n-1)/2` onto row-major pairs `(i, j)` with `i < j`.
fn unrank_pair(mut p: usize, n: usize) -> (usize, usize) {
    let mut i = 0;
    loop {
        let row = n - 1 - i;
        if p < row {
            return (i, i + 1 + p);
        }
        p -= row;
        i += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(winner: usize, loser: usize) -> ComparisonRecord {
        ComparisonRecord {
            winner,
            loser,
            votes_winner: 15,
            votes_loser: 5,
        }
    }

    fn unit(v: &[f64]) -> UnitVector {
        UnitVector(v.to_vec())
    }

    #[test]
    fn likelihood_values() {
        assert_eq!(pair_likelihood(0.3, 0.3, 0.7), 0.5);
        let d = 0.4;
        let p = pair_likelihood(std::f64::consts::SQRT_2 * d, 0.0, d);
        assert!((p - 0.841_345).abs() < 1e-6);
        assert!(pair_likelihood(0.1, 0.0, 1e-6) > 1.0 - 1e-12);
    }

    #[test]
    fn empty_relations_give_prior_mode() {
        let k = DMatrix::identity(3, 3);
        let m = map_estimate(&[], &k, 1.0, &MapOptions::default()).unwrap();
        assert_eq!(m.g, DVector::zeros(3));
        assert_eq!(hessian_omega(&[], &m.g, 1.0), DMatrix::zeros(3, 3));
        let data = ComparisonDataset::unlabeled(vec![unit(&[0.0]), unit(&[1.0])]);
        assert_eq!(log_evidence(&data, &PreferenceParams::new(0.3, 0.5).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn two_item_map_is_antisymmetric() {
        let k = DMatrix::identity(2, 2);
        let m = map_estimate(&[rel(0, 1)], &k, 1.0, &MapOptions::default()).unwrap();
        assert_eq!(m.g[0], -m.g[1]);
        assert!(m.g[0] > 0.0);
    }

    #[test]
    fn single_relation_block_structure() {
        let g = DVector::from_vec(vec![0.2, 0.2, -1.0]);
        let om = hessian_omega(&[rel(1, 0)], &g, 0.5);
        let c = om[(0, 0)];
        assert!(c > 0.0);
        assert_eq!(om[(1, 1)], c);
        assert_eq!(om[(0, 1)], -c);
        assert_eq!(om[(1, 0)], -c);
        assert!(om.row(2).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn dataset_validation() {
        let items = vec![
            Item { id: 0, vector: unit(&[0.0]) },
            Item { id: 1, vector: unit(&[1.0]) },
        ];
        assert!(ComparisonDataset::new(items.clone(), vec![rel(0, 0)]).is_err());
        assert!(ComparisonDataset::new(items.clone(), vec![rel(0, 2)]).is_err());
        let tied = ComparisonRecord { winner: 0, loser: 1, votes_winner: 10, votes_loser: 10 };
        assert!(ComparisonDataset::new(items.clone(), vec![tied]).is_err());
        let shuffled = vec![items[1].clone(), items[0].clone()];
        assert!(ComparisonDataset::new(shuffled, vec![]).is_err());
        let ok = ComparisonDataset::new(items, vec![rel(1, 0)]).unwrap();
        let text = serde_json::to_string(&ok).unwrap();
        assert!(text.contains("\"votes_winner\":15"));
        let back: ComparisonDataset = serde_json::from_str(&text).unwrap();
        assert_eq!(back, ok);
        let bad = text.replace("\"loser\":0", "\"loser\":1");
        assert!(serde_json::from_str::<ComparisonDataset>(&bad).is_err());
    }

    #[test]
    fn unrank_covers_all_pairs() {
        let n = 6;
        let all: Vec<_> = (0..n * (n - 1) / 2).map(|p| unrank_pair(p, n)).collect();
        let mut expected = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                expected.push((i, j));
            }
        }
        assert_eq!(all, expected);
    }

    #[test]
    fn zero_tuning_steps_return_init() {
        let data = ComparisonDataset::new(
            vec![Item { id: 0, vector: unit(&[0.1]) }, Item { id: 1, vector: unit(&[0.6]) }],
            vec![rel(0, 1)],
        )
        .unwrap();
        let init = PreferenceParams::new(0.3, 0.5).unwrap();
        let r = tune_hyperparameters(&data, init, &TuneOptions { steps: 0, ..Default::default() }).unwrap();
        assert_eq!(r.params, init);
        assert!(r.trace.is_empty());
    }

    #[test]
    fn prediction_at_item_and_far_away() {
        let data = ComparisonDataset::new(
            vec![
                Item { id: 0, vector: unit(&[0.1, 0.1]) },
                Item { id: 1, vector: unit(&[0.3, 0.2]) },
                Item { id: 2, vector: unit(&[0.2, 0.4]) },
            ],
            vec![rel(0, 1), rel(1, 2), rel(0, 2)],
        )
        .unwrap();
        let model = PreferenceModel::fit(&data, PreferenceParams::new(0.2, 0.3).unwrap(), &MapOptions::default()).unwrap();
        for (i, item) in data.items().iter().enumerate() {
            let p = model.predict(&item.vector);
            assert!((p.mean - model.g_star()[i]).abs() < 1e-8, "item {i}");
        }
        let far = model.predict(&unit(&[5.0, 5.0]));
        assert!(far.mean.abs() < 1e-12);
        assert!((far.variance - 1.0).abs() < 1e-12);
        assert!(model.g_star()[0] > model.g_star()[1] && model.g_star()[1] > model.g_star()[2]);
    }

    #[test]
    fn snapshot_round_trip_is_exact() {
        let data = ComparisonDataset::new(
            vec![
                Item { id: 0, vector: unit(&[0.1]) },
                Item { id: 1, vector: unit(&[0.5]) },
                Item { id: 2, vector: unit(&[0.9]) },
            ],
            vec![rel(2, 0), rel(1, 0)],
        )
        .unwrap();
        let model = PreferenceModel::fit(&data, PreferenceParams::new(0.4, 0.6).unwrap(), &MapOptions::default()).unwrap();
        let text = serde_json::to_string(&model.snapshot()).unwrap();
        let back = PreferenceModel::from_snapshot(serde_json::from_str(&text).unwrap(), data.relations()).unwrap();
        for x in [0.0, 0.33, 0.5, 0.77] {
            let (p, q) = (model.predict(&unit(&[x])), back.predict(&unit(&[x])));
            assert!((p.mean - q.mean).abs() < 1e-10);
            assert!((p.variance - q.variance).abs() < 1e-10);
        }
    }
}
