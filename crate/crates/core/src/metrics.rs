//! Ranking and regression metrics: AP over the top `ρN` labeled items,
//! NDCG with fold-based gains, and MAE.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use thiserror::Error;

pub const DEFAULT_AP_RHO: f64 = 0.1;
pub const DEFAULT_NDCG_FOLDS: usize = 15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("rankings do not contain the same ids")]
    IdMismatch,
    #[error("duplicate id '{0}' in ranking")]
    DuplicateId(String),
    #[error("ranking is empty")]
    Empty,
    #[error("{0}")]
    Params(String),
    #[error("{labels} labels but {preds} predictions")]
    LengthMismatch { labels: usize, preds: usize },
    #[error("ranking CSV: {0}")]
    Csv(String),
}

/// Ids ordered best first, with the score that produced the order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    entries: Vec<(String, f64)>,
}

impl RankedList {
    /// Sorts by descending score; equal scores keep their input order.
    pub fn from_scores(mut entries: Vec<(String, f64)>) -> Result<Self, MetricsError> {
        let mut seen = BTreeSet::new();
        for (id, _) in &entries {
            if !seen.insert(id.as_str()) {
                return Err(MetricsError::DuplicateId(id.clone()));
            }
        }
        entries.sort_by(|a, b| b.1.total_cmp(&a.1));
        Ok(Self { entries })
    }

    /// Takes the order as given.
    pub fn from_order(ids: Vec<String>) -> Result<Self, MetricsError> {
        let n = ids.len() as f64;
        Self::from_scores(
            ids.into_iter()
                .enumerate()
                .map(|(i, id)| (id, n - i as f64))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(id, _)| id.as_str())
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    /// Reads an `id,score` CSV.
    pub fn from_csv<R: Read>(r: R) -> Result<Self, MetricsError> {
        #[derive(Deserialize)]
        struct Row {
            id: String,
            score: f64,
        }
        let mut rdr = csv::Reader::from_reader(r);
        let rows = rdr
            .deserialize::<Row>()
            .enumerate()
            .map(|(i, row)| {
                row.map(|r| (r.id, r.score))
                    .map_err(|e| MetricsError::Csv(format!("row {}: {e}", i + 2)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_scores(rows)
    }
}

fn check_same_ids(label: &RankedList, pred: &RankedList) -> Result<(), MetricsError> {
    if label.is_empty() {
        return Err(MetricsError::Empty);
    }
    let a: BTreeSet<&str> = label.ids().collect();
    let b: BTreeSet<&str> = pred.ids().collect();
    if a != b {
        return Err(MetricsError::IdMismatch);
    }
    Ok(())
}

/// `K = round(ρN)`, at least 1.
pub fn relevant_count(n: usize, rho: f64) -> usize {
    ((rho * n as f64).round() as usize).max(1)
}

/// `(1/K) Σ_i (s_i / i) Σ_{j≤i} s_j` with `s_i = 1` iff the i-th predicted
/// item is among the top `K = round(ρN)` labeled items.
pub fn average_precision(label: &RankedList, pred: &RankedList, rho: f64) -> Result<f64, MetricsError> {
    check_same_ids(label, pred)?;
    if !(rho > 0.0 && rho < 1.0) {
        return Err(MetricsError::Params(format!("rho must be in (0, 1), got {rho}")));
    }
    let k = relevant_count(label.len(), rho);
    let relevant: BTreeSet<&str> = label.ids().take(k).collect();
    let mut hits = 0.0;
    let mut sum = 0.0;
    for (i, id) in pred.ids().enumerate() {
        let s = if relevant.contains(id) { 1.0 } else { 0.0 };
        hits += s;
        sum += (s / (i + 1) as f64) * hits;
    }
    Ok(sum / k as f64)
}

/// Gain of each labeled id: fold `j` (1-based) of size `⌊N/n⌋` scores
/// `n - j + 1`; the tail beyond `n·⌊N/n⌋` scores 0.
fn fold_scores(label: &RankedList, n_folds: usize) -> BTreeMap<&str, u32> {
    let m = label.len() / n_folds;
    label
        .ids()
        .enumerate()
        .map(|(pos, id)| {
            let fold = pos / m;
            let score = if fold < n_folds { (n_folds - fold) as u32 } else { 0 };
            (id, score)
        })
        .collect()
}

fn dcg<'a>(order: impl Iterator<Item = &'a str>, scores: &BTreeMap<&str, u32>) -> f64 {
    order
        .enumerate()
        .map(|(i, id)| {
            let s = scores[id];
            ((2f64).powi(s as i32) - 1.0) / ((i + 2) as f64).log2()
        })
        .sum()
}

/// DCG of the predicted order over the DCG of the labeled order, with
/// positions counted from 1.
pub fn ndcg(label: &RankedList, pred: &RankedList, n_folds: usize) -> Result<f64, MetricsError> {
    check_same_ids(label, pred)?;
    if n_folds == 0 {
        return Err(MetricsError::Params("n_folds must be at least 1".into()));
    }
    if n_folds > label.len() {
        return Err(MetricsError::Params(format!(
            "n_folds ({n_folds}) exceeds ranking length ({})",
            label.len()
        )));
    }
    let scores = fold_scores(label, n_folds);
    let ideal = dcg(label.ids(), &scores);
    Ok(dcg(pred.ids(), &scores) / ideal)
}

pub fn mae(labels: &[f64], preds: &[f64]) -> Result<f64, MetricsError> {
    if labels.len() != preds.len() {
        return Err(MetricsError::LengthMismatch {
            labels: labels.len(),
            preds: preds.len(),
        });
    }
    if labels.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(labels.iter().zip(preds).map(|(l, p)| (l - p).abs()).sum::<f64>() / labels.len() as f64)
}
