//! Variable analysis over a fitted model: where the top-scoring designs lie
//! along one variable, how score and variable co-vary, and how two
//! variables co-occur among the best designs.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

use crate::design_space::{DesignSpace, DesignVector, VariableSpec};
use crate::gp::Predictor;
use crate::normal;

pub const DEFAULT_SAMPLES: usize = 30_000;
pub const DEFAULT_BINS: usize = 30;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("unknown variable '{0}'")]
    UnknownVariable(String),
    #[error("{0}")]
    Params(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub variable: String,
    /// `bins + 1` edges in raw units.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub k: usize,
    pub n_samples: usize,
    pub min_selected_score: f64,
    pub max_rejected_score: Option<f64>,
}

impl Histogram {
    /// Center of the most populated bin (first on ties).
    pub fn mode_bin(&self) -> usize {
        self.counts
            .iter()
            .enumerate()
            .fold((0, 0), |(bi, bc), (i, &c)| if c > bc { (i, c) } else { (bi, bc) })
            .0
    }

    pub fn bin_contains(&self, bin: usize, value: f64) -> bool {
        let last = bin + 1 == self.counts.len();
        value >= self.edges[bin] && (value < self.edges[bin + 1] || (last && value <= self.edges[bin + 1]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub variable: String,
    /// Grid over the variable, raw units.
    pub x: Vec<f64>,
    /// Grid over the predicted score.
    pub y: Vec<f64>,
    /// `density[i][j]` at `(x[i], y[j])`.
    pub density: Vec<Vec<f64>>,
    pub bandwidth: [f64; 2],
    pub n_samples: usize,
}

impl DensityGrid {
    /// Trapezoidal integral of the density over the grid.
    pub fn integral(&self) -> f64 {
        let w = |v: &[f64], i: usize| {
            let lo = if i == 0 { 0.0 } else { (v[i] - v[i - 1]) / 2.0 };
            let hi = if i + 1 == v.len() { 0.0 } else { (v[i + 1] - v[i]) / 2.0 };
            lo + hi
        };
        let mut total = 0.0;
        for i in 0..self.x.len() {
            for j in 0..self.y.len() {
                total += self.density[i][j] * w(&self.x, i) * w(&self.y, j);
            }
        }
        total
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointHistogram {
    pub var_a: String,
    pub var_b: String,
    pub edges_a: Vec<f64>,
    pub edges_b: Vec<f64>,
    /// `counts[i][j]` for bin `i` of `var_a` and bin `j` of `var_b`.
    pub counts: Vec<Vec<usize>>,
    pub k: usize,
    pub n_samples: usize,
    /// Pearson correlation of the two variables over the selected set.
    pub correlation: f64,
    pub min_selected_score: f64,
    pub max_rejected_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AnalysisReport {
    TopK(Histogram),
    Density(DensityGrid),
    Joint(JointHistogram),
}

impl AnalysisReport {
    /// Flat CSV, one row per bin or grid cell.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        match self {
            AnalysisReport::TopK(h) => {
                out.push_str("variable,bin_lo,bin_hi,count\n");
                for (i, c) in h.counts.iter().enumerate() {
                    let _ = writeln!(out, "{},{},{},{}", h.variable, h.edges[i], h.edges[i + 1], c);
                }
            }
            AnalysisReport::Density(d) => {
                out.push_str("variable,value,score,density\n");
                for (i, x) in d.x.iter().enumerate() {
                    for (j, y) in d.y.iter().enumerate() {
                        let _ = writeln!(out, "{},{},{},{}", d.variable, x, y, d.density[i][j]);
                    }
                }
            }
            AnalysisReport::Joint(j) => {
                let _ = writeln!(out, "{}_lo,{}_hi,{}_lo,{}_hi,count", j.var_a, j.var_a, j.var_b, j.var_b);
                for (a, row) in j.counts.iter().enumerate() {
                    for (b, c) in row.iter().enumerate() {
                        let _ = writeln!(
                            out,
                            "{},{},{},{},{}",
                            j.edges_a[a],
                            j.edges_a[a + 1],
                            j.edges_b[b],
                            j.edges_b[b + 1],
                            c
                        );
                    }
                }
            }
        }
        out
    }
}

struct Scored {
    vectors: Vec<DesignVector>,
    scores: Vec<f64>,
    /// Indices sorted by descending score, earlier sample first on ties.
    order: Vec<usize>,
}

fn score_samples<P: Predictor + ?Sized>(model: &P, space: &DesignSpace, n_samples: usize, seed: u64) -> Scored {
    let vectors = space.sample_uniform(seed, n_samples);
    let scores: Vec<f64> = vectors
        .iter()
        .map(|v| model.predict_mean(&space.normalize(v).expect("sample has space dimension")))
        .collect();
    let mut order: Vec<usize> = (0..n_samples).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    Scored {
        vectors,
        scores,
        order,
    }
}

impl Scored {
    fn selection_bounds(&self, k: usize) -> (f64, Option<f64>) {
        let min_in = self.scores[self.order[k - 1]];
        let max_out = self.order.get(k).map(|&i| self.scores[i]);
        debug_assert!(max_out.is_none_or(|m| m <= min_in));
        (min_in, max_out)
    }
}

fn variable<'a>(space: &'a DesignSpace, name: &str) -> Result<(usize, &'a VariableSpec), AnalysisError> {
    space
        .index_of(name)
        .map(|i| (i, &space.variables()[i]))
        .ok_or_else(|| AnalysisError::UnknownVariable(name.to_string()))
}

fn edges(spec: &VariableSpec, bins: usize) -> Vec<f64> {
    (0..=bins)
        .map(|i| spec.min + spec.range() * i as f64 / bins as f64)
        .collect()
}

fn bin_of(spec: &VariableSpec, bins: usize, value: f64) -> usize {
    let t = (value - spec.min) / spec.range();
    ((t * bins as f64).floor() as isize).clamp(0, bins as isize - 1) as usize
}

fn check_k(k: usize, n_samples: usize) -> Result<(), AnalysisError> {
    if k == 0 || k > n_samples {
        return Err(AnalysisError::Params(format!(
            "k must be in 1..={n_samples}, got {k}"
        )));
    }
    Ok(())
}

/// Histogram of `variable` over the `k` best of `n_samples` uniform designs.
pub fn top_k_distribution<P: Predictor + ?Sized>(
    model: &P,
    space: &DesignSpace,
    n_samples: usize,
    k: usize,
    variable_name: &str,
    bins: usize,
    seed: u64,
) -> Result<Histogram, AnalysisError> {
    check_k(k, n_samples)?;
    if bins == 0 {
        return Err(AnalysisError::Params("bins must be positive".into()));
    }
    let (idx, spec) = variable(space, variable_name)?;
    let scored = score_samples(model, space, n_samples, seed);
    let mut counts = vec![0; bins];
    for &i in &scored.order[..k] {
        counts[bin_of(spec, bins, scored.vectors[i].0[idx])] += 1;
    }
    let (min_selected_score, max_rejected_score) = scored.selection_bounds(k);
    Ok(Histogram {
        variable: variable_name.to_string(),
        edges: edges(spec, bins),
        counts,
        k,
        n_samples,
        min_selected_score,
        max_rejected_score,
    })
}

fn std_dev(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt()
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Gaussian product-kernel density of `(variable value, predicted score)`
/// over `n_samples` uniform designs. Bandwidths follow Scott's rule
/// `σ n^{-1/6}` unless given. The grid extends three bandwidths past the
/// data on every side.
#[allow(clippy::too_many_arguments)]
pub fn density_2d<P: Predictor + ?Sized>(
    model: &P,
    space: &DesignSpace,
    variable_name: &str,
    grid_w: usize,
    grid_h: usize,
    n_samples: usize,
    bandwidth: Option<[f64; 2]>,
    seed: u64,
) -> Result<DensityGrid, AnalysisError> {
    if grid_w < 2 || grid_h < 2 {
        return Err(AnalysisError::Params("grid sizes must be at least 2".into()));
    }
    if n_samples < 2 {
        return Err(AnalysisError::Params("at least two samples are needed".into()));
    }
    let (idx, spec) = variable(space, variable_name)?;
    let scored = score_samples(model, space, n_samples, seed);
    let xs: Vec<f64> = scored.vectors.iter().map(|v| v.0[idx]).collect();
    let ys = scored.scores;
    let scott = (n_samples as f64).powf(-1.0 / 6.0);
    let fallback = |s: &[f64]| 1e-3 * s.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let [hx, hy] = match bandwidth {
        Some(b) if b[0] > 0.0 && b[1] > 0.0 => b,
        Some(_) => return Err(AnalysisError::Params("bandwidths must be positive".into())),
        None => {
            let bx = std_dev(&xs) * scott;
            let by = std_dev(&ys) * scott;
            [
                if bx > 0.0 { bx } else { fallback(&xs) },
                if by > 0.0 { by } else { fallback(&ys) },
            ]
        }
    };
    let (ymin, ymax) = ys
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    let xlo = xs.iter().copied().fold(spec.max, f64::min).min(spec.min);
    let xhi = xs.iter().copied().fold(spec.min, f64::max).max(spec.max);
    let gx = linspace(xlo - 3.0 * hx, xhi + 3.0 * hx, grid_w);
    let gy = linspace(ymin - 3.0 * hy, ymax + 3.0 * hy, grid_h);

    let mut density = vec![vec![0.0; grid_h]; grid_w];
    let mut kx = vec![0.0; grid_w];
    let mut ky = vec![0.0; grid_h];
    for (x, y) in xs.iter().zip(&ys) {
        for (k, g) in kx.iter_mut().zip(&gx) {
            *k = normal::pdf((g - x) / hx) / hx;
        }
        for (k, g) in ky.iter_mut().zip(&gy) {
            *k = normal::pdf((g - y) / hy) / hy;
        }
        for (row, a) in density.iter_mut().zip(&kx) {
            if *a == 0.0 {
                continue;
            }
            for (cell, b) in row.iter_mut().zip(&ky) {
                *cell += a * b;
            }
        }
    }
    let n = n_samples as f64;
    for row in &mut density {
        for cell in row.iter_mut() {
            *cell /= n;
        }
    }
    Ok(DensityGrid {
        variable: variable_name.to_string(),
        x: gx,
        y: gy,
        density,
        bandwidth: [hx, hy],
        n_samples,
    })
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// Joint histogram of two variables over the `k` best designs.
#[allow(clippy::too_many_arguments)]
pub fn variable_correlation<P: Predictor + ?Sized>(
    model: &P,
    space: &DesignSpace,
    var_a: &str,
    var_b: &str,
    k: usize,
    n_samples: usize,
    bins_a: usize,
    bins_b: usize,
    seed: u64,
) -> Result<JointHistogram, AnalysisError> {
    if var_a == var_b {
        return Err(AnalysisError::Params("variables must differ".into()));
    }
    check_k(k, n_samples)?;
    if bins_a == 0 || bins_b == 0 {
        return Err(AnalysisError::Params("bins must be positive".into()));
    }
    let (ia, sa) = variable(space, var_a)?;
    let (ib, sb) = variable(space, var_b)?;
    let scored = score_samples(model, space, n_samples, seed);
    let mut counts = vec![vec![0; bins_b]; bins_a];
    let mut va = Vec::with_capacity(k);
    let mut vb = Vec::with_capacity(k);
    for &i in &scored.order[..k] {
        let (x, y) = (scored.vectors[i].0[ia], scored.vectors[i].0[ib]);
        counts[bin_of(sa, bins_a, x)][bin_of(sb, bins_b, y)] += 1;
        va.push(x);
        vb.push(y);
    }
    let (min_selected_score, max_rejected_score) = scored.selection_bounds(k);
    Ok(JointHistogram {
        var_a: var_a.to_string(),
        var_b: var_b.to_string(),
        edges_a: edges(sa, bins_a),
        edges_b: edges(sb, bins_b),
        counts,
        k,
        n_samples,
        correlation: pearson(&va, &vb),
        min_selected_score,
        max_rejected_score,
    })
}
