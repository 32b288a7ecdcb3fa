//! Zero-mean Gaussian-process regression with an RBF kernel.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

use crate::design_space::UnitVector;
use crate::linalg::{Cholesky, NotPositiveDefinite};

/// Distance used inside the RBF exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelNorm {
    /// `exp(-‖u-u'‖ / 2Δ²)`
    L2,
    /// `exp(-‖u-u'‖² / 2Δ²)`
    #[default]
    L2sq,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    /// Kernel width Δ in unit-cube coordinates.
    pub width: f64,
    /// Diagonal stabilizer σ_n².
    pub jitter: f64,
    #[serde(default)]
    pub norm: KernelNorm,
}

impl KernelParams {
    pub fn new(width: f64, jitter: f64) -> Result<Self, GpError> {
        let p = Self {
            width,
            jitter,
            norm: KernelNorm::L2sq,
        };
        p.check()?;
        Ok(p)
    }

    pub fn with_norm(mut self, norm: KernelNorm) -> Self {
        self.norm = norm;
        self
    }

    pub fn check(&self) -> Result<(), GpError> {
        if !(self.width > 0.0) || !self.width.is_finite() {
            return Err(GpError::Params(format!("width must be positive, got {}", self.width)));
        }
        if !(self.jitter >= 0.0) || !self.jitter.is_finite() {
            return Err(GpError::Params(format!(
                "jitter must be non-negative, got {}",
                self.jitter
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GpError {
    #[error("invalid kernel parameters: {0}")]
    Params(String),
    #[error("training set is empty")]
    Empty,
    #[error("{inputs} inputs but {targets} targets")]
    LengthMismatch { inputs: usize, targets: usize },
    #[error("inputs have inconsistent dimension: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("gram matrix {0}")]
    NotPositiveDefinite(#[from] NotPositiveDefinite),
    #[error("every grid point failed to fit; last error: {0}")]
    AllGridPointsFailed(Box<GpError>),
}

/// RBF kernel value in (0, 1].
pub fn rbf_kernel(u: &UnitVector, v: &UnitVector, params: &KernelParams) -> f64 {
    let sq = u.sq_distance(v);
    let dist = match params.norm {
        KernelNorm::L2sq => sq,
        KernelNorm::L2 => sq.sqrt(),
    };
    (-dist / (2.0 * params.width * params.width)).exp()
}

/// Gram matrix without jitter. Symmetric by construction.
pub fn gram(xs: &[UnitVector], params: &KernelParams) -> DMatrix<f64> {
    let n = xs.len();
    let mut k = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = 1.0;
        for j in 0..i {
            let v = rbf_kernel(&xs[i], &xs[j], params);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

pub fn cross_kernel(xs: &[UnitVector], u: &UnitVector, params: &KernelParams) -> DVector<f64> {
    DVector::from_iterator(xs.len(), xs.iter().map(|x| rbf_kernel(x, u, params)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
}

impl Prediction {
    pub fn std(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// Anything that maps a unit-cube point to a predictive Gaussian.
pub trait Predictor {
    fn predict(&self, u: &UnitVector) -> Prediction;

    fn predict_mean(&self, u: &UnitVector) -> f64 {
        self.predict(u).mean
    }
}

/// Persisted form of a fitted regressor; factorizations are rebuilt on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpSnapshot {
    pub x: Vec<UnitVector>,
    pub y_raw: Vec<f64>,
    pub params: KernelParams,
    pub y_mean: f64,
}

#[derive(Debug, Clone)]
pub struct GpPosterior {
    x: Vec<UnitVector>,
    y_raw: Vec<f64>,
    y: DVector<f64>,
    y_mean: f64,
    params: KernelParams,
    chol: Cholesky,
    alpha: DVector<f64>,
}

impl GpPosterior {
    /// Centers the targets and factors `K + σ_n² I`.
    pub fn fit(x: Vec<UnitVector>, y_raw: Vec<f64>, params: KernelParams) -> Result<Self, GpError> {
        params.check()?;
        if x.is_empty() {
            return Err(GpError::Empty);
        }
        if x.len() != y_raw.len() {
            return Err(GpError::LengthMismatch {
                inputs: x.len(),
                targets: y_raw.len(),
            });
        }
        let d = x[0].len();
        if let Some(bad) = x.iter().find(|u| u.len() != d) {
            return Err(GpError::Dimension {
                expected: d,
                got: bad.len(),
            });
        }
        let y_mean = y_raw.iter().sum::<f64>() / y_raw.len() as f64;
        Self::fit_centered(x, y_raw, y_mean, params)
    }

    fn fit_centered(
        x: Vec<UnitVector>,
        y_raw: Vec<f64>,
        y_mean: f64,
        params: KernelParams,
    ) -> Result<Self, GpError> {
        let n = x.len();
        let mut k = gram(&x, &params);
        for i in 0..n {
            k[(i, i)] += params.jitter;
        }
        let chol = Cholesky::new(&k)?;
        let y = DVector::from_iterator(n, y_raw.iter().map(|v| v - y_mean));
        let alpha = chol.solve(&y);
        Ok(Self {
            x,
            y_raw,
            y,
            y_mean,
            params,
            chol,
            alpha,
        })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn inputs(&self) -> &[UnitVector] {
        &self.x
    }

    pub fn targets(&self) -> &[f64] {
        &self.y_raw
    }

    pub fn centered_targets(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn y_mean(&self) -> f64 {
        self.y_mean
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn cholesky(&self) -> &Cholesky {
        &self.chol
    }

    /// `-½ Yᵀα - Σ ln L_ii - (n/2) ln 2π`.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.len() as f64;
        -0.5 * self.y.dot(&self.alpha) - self.chol.half_log_det() - 0.5 * n * (2.0 * PI).ln()
    }

    pub fn snapshot(&self) -> GpSnapshot {
        GpSnapshot {
            x: self.x.clone(),
            y_raw: self.y_raw.clone(),
            params: self.params,
            y_mean: self.y_mean,
        }
    }

    pub fn from_snapshot(s: GpSnapshot) -> Result<Self, GpError> {
        s.params.check()?;
        if s.x.is_empty() {
            return Err(GpError::Empty);
        }
        if s.x.len() != s.y_raw.len() {
            return Err(GpError::LengthMismatch {
                inputs: s.x.len(),
                targets: s.y_raw.len(),
            });
        }
        Self::fit_centered(s.x, s.y_raw, s.y_mean, s.params)
    }
}

impl Predictor for GpPosterior {
    fn predict(&self, u: &UnitVector) -> Prediction {
        let k = cross_kernel(&self.x, u, &self.params);
        let mean = k.dot(&self.alpha) + self.y_mean;
        let v = self.chol.solve_lower(&k);
        let prior = 1.0;
        let variance = (prior - v.dot(&v)).clamp(0.0, prior);
        Prediction { mean, variance }
    }

    fn predict_mean(&self, u: &UnitVector) -> f64 {
        cross_kernel(&self.x, u, &self.params).dot(&self.alpha) + self.y_mean
    }
}

/// Default evidence grid over widths × jitters.
pub fn default_grid(norm: KernelNorm) -> Vec<KernelParams> {
    const WIDTHS: [f64; 8] = [0.05, 0.1, 0.2, 0.35, 0.5, 0.75, 1.0, 1.5];
    const JITTERS: [f64; 4] = [1e-6, 1e-4, 1e-2, 0.1];
    WIDTHS
        .iter()
        .flat_map(|&width| {
            JITTERS.iter().map(move |&jitter| KernelParams {
                width,
                jitter,
                norm,
            })
        })
        .collect()
}

/// Result of an evidence grid search.
#[derive(Debug, Clone)]
pub struct GridSelection {
    pub best: KernelParams,
    pub best_evidence: f64,
    /// `(params, evidence)` for every grid point that fitted.
    pub evaluated: Vec<(KernelParams, f64)>,
}

/// Evaluates the log marginal likelihood over `grid`. Points that fail to
/// factor are skipped; ties go to the smaller width, then smaller jitter.
pub fn evaluate_grid(
    x: &[UnitVector],
    y: &[f64],
    grid: &[KernelParams],
) -> Result<GridSelection, GpError> {
    if grid.is_empty() {
        return Err(GpError::Params("evidence grid is empty".into()));
    }
    let mut order: Vec<&KernelParams> = grid.iter().collect();
    order.sort_by(|a, b| {
        a.width
            .total_cmp(&b.width)
            .then(a.jitter.total_cmp(&b.jitter))
    });
    let mut evaluated = Vec::with_capacity(grid.len());
    let mut last_err = None;
    for p in order {
        match GpPosterior::fit(x.to_vec(), y.to_vec(), *p) {
            Ok(m) => {
                let lml = m.log_marginal_likelihood();
                if lml.is_finite() {
                    evaluated.push((*p, lml));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let (best, best_evidence) = evaluated
        .iter()
        .fold(None::<(KernelParams, f64)>, |acc, &(p, v)| match acc {
            Some((_, bv)) if bv >= v => acc,
            _ => Some((p, v)),
        })
        .ok_or_else(|| {
            GpError::AllGridPointsFailed(Box::new(
                last_err.unwrap_or(GpError::Params("no finite evidence".into())),
            ))
        })?;
    Ok(GridSelection {
        best,
        best_evidence,
        evaluated,
    })
}

/// Grid point maximizing the log marginal likelihood.
pub fn select_params(
    x: &[UnitVector],
    y: &[f64],
    grid: &[KernelParams],
) -> Result<KernelParams, GpError> {
    evaluate_grid(x, y, grid).map(|s| s.best)
}
