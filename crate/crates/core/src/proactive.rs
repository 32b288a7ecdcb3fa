//! Stage-1 active learning: Likert label aggregation with rater filtering,
//! Expected Improvement, and random-sampling batch selection.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use thiserror::Error;

use crate::design_space::{DesignSpace, DesignVector, UnitVector};
use crate::gp::{GpPosterior, Predictor};
use crate::normal;
use crate::seed;

/// Largest dimension for which `3·2^d` is accepted.
pub const MAX_BATCH_DIM: usize = 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProactiveError {
    #[error("solution {0} has no retained ratings")]
    Unlabelable(String),
    #[error("no labeled solutions")]
    NoLabels,
    #[error("configuration error: {0}")]
    Config(String),
    #[error("ratings CSV: {0}")]
    Csv(String),
}

/// One participant's answer to one Likert question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub rater_id: String,
    pub solution_id: String,
    pub score: u8,
    pub presentation_index: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSolution {
    pub solution_id: String,
    pub vector: DesignVector,
    /// Mean of retained raters' scores, in [1, 5].
    pub y: f64,
    pub n_raters_used: usize,
    pub round: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundPlan {
    pub round: usize,
    pub batch: Vec<DesignVector>,
    /// Candidate-pool size per selection.
    pub a: usize,
    /// Batch size.
    pub b: usize,
    /// Set when duplicate suppression ran out of retries for some slot.
    #[serde(default)]
    pub duplicate_warning: bool,
}

impl RoundPlan {
    pub fn solution_id(round: usize, index: usize) -> String {
        format!("r{round}-s{index}")
    }

    pub fn solution_ids(&self) -> Vec<String> {
        (0..self.batch.len())
            .map(|i| Self::solution_id(self.round, i))
            .collect()
    }
}

/// Writes records with the `rater_id,solution_id,score,presentation_index` header.
pub fn write_ratings_csv<W: Write>(w: W, records: &[RatingRecord]) -> Result<(), ProactiveError> {
    let mut out = csv::Writer::from_writer(w);
    for r in records {
        out.serialize(r).map_err(|e| ProactiveError::Csv(e.to_string()))?;
    }
    out.flush().map_err(|e| ProactiveError::Csv(e.to_string()))
}

pub fn read_ratings_csv<R: Read>(r: R) -> Result<Vec<RatingRecord>, ProactiveError> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr
        .headers()
        .map_err(|e| ProactiveError::Csv(e.to_string()))?
        .clone();
    let expected = ["rater_id", "solution_id", "score", "presentation_index"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(ProactiveError::Csv(format!(
            "expected header {}, found {}",
            expected.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut records = Vec::new();
    for (i, row) in rdr.deserialize::<RatingRecord>().enumerate() {
        let rec = row.map_err(|e| ProactiveError::Csv(format!("row {}: {e}", i + 2)))?;
        if !(1..=5).contains(&rec.score) {
            return Err(ProactiveError::Csv(format!(
                "row {}: score {} outside 1..5",
                i + 2,
                rec.score
            )));
        }
        records.push(rec);
    }
    Ok(records)
}

/// `(solution_id, rater_id)` pairs for which a rater answered more than once.
pub fn detect_duplicates(records: &[RatingRecord]) -> Vec<(String, String)> {
    let mut counts: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    for r in records {
        *counts
            .entry((r.solution_id.as_str(), r.rater_id.as_str()))
            .or_default() += 1;
    }
    counts
        .into_iter()
        .filter(|(_, c)| *c > 1)
        .map(|((s, r), _)| (s.to_string(), r.to_string()))
        .collect()
}

/// Raters kept after the consistency and extremity rules.
///
/// A rater is dropped if the answers to any duplicated question differ by
/// more than 2, or if every score they gave is 1 or 5.
pub fn filter_raters(records: &[RatingRecord], duplicates: &[(String, String)]) -> BTreeSet<String> {
    let mut by_rater: BTreeMap<&str, Vec<&RatingRecord>> = BTreeMap::new();
    for r in records {
        by_rater.entry(r.rater_id.as_str()).or_default().push(r);
    }
    let mut removed = BTreeSet::new();
    for (solution, rater) in duplicates {
        let scores: Vec<u8> = by_rater
            .get(rater.as_str())
            .into_iter()
            .flatten()
            .filter(|r| &r.solution_id == solution)
            .map(|r| r.score)
            .collect();
        if let (Some(lo), Some(hi)) = (scores.iter().min(), scores.iter().max()) {
            if hi - lo > 2 {
                removed.insert(rater.as_str());
            }
        }
    }
    for (rater, recs) in &by_rater {
        if recs.iter().all(|r| r.score == 1 || r.score == 5) {
            removed.insert(rater);
        }
    }
    by_rater
        .keys()
        .filter(|r| !removed.contains(*r))
        .map(|r| r.to_string())
        .collect()
}

/// Averages the retained ratings of one solution.
///
/// A rater who saw the solution more than once contributes the mean of
/// their answers, so duplicated questions do not double-weight anyone.
pub fn aggregate(
    solution_id: &str,
    vector: DesignVector,
    records: &[RatingRecord],
    retained: &BTreeSet<String>,
    round: usize,
) -> Result<LabeledSolution, ProactiveError> {
    let mut per_rater: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for r in records
        .iter()
        .filter(|r| r.solution_id == solution_id && retained.contains(&r.rater_id))
    {
        let e = per_rater.entry(r.rater_id.as_str()).or_default();
        e.0 += f64::from(r.score);
        e.1 += 1;
    }
    if per_rater.is_empty() {
        return Err(ProactiveError::Unlabelable(solution_id.to_string()));
    }
    let n = per_rater.len();
    let y = per_rater.values().map(|(s, c)| s / *c as f64).sum::<f64>() / n as f64;
    Ok(LabeledSolution {
        solution_id: solution_id.to_string(),
        vector,
        y,
        n_raters_used: n,
        round,
    })
}

/// Filters raters and labels every solution of a plan.
pub fn label_round(
    plan: &RoundPlan,
    records: &[RatingRecord],
) -> Result<(Vec<LabeledSolution>, BTreeSet<String>), ProactiveError> {
    let retained = filter_raters(records, &detect_duplicates(records));
    let labels = plan
        .solution_ids()
        .iter()
        .zip(&plan.batch)
        .map(|(id, v)| aggregate(id, v.clone(), records, &retained, plan.round))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((labels, retained))
}

/// Order in which one rater sees `n` solutions: a shuffle of `0..n` plus
/// `round(rate·n)` re-presented solutions, each placed after its first showing.
pub fn presentation_queue<R: rand::Rng + ?Sized>(n: usize, duplicate_rate: f64, rng: &mut R) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut queue: Vec<usize> = (0..n).collect();
    queue.shuffle(rng);
    let n_dup = ((duplicate_rate.max(0.0) * n as f64).round() as usize).min(n);
    let chosen = rand::seq::index::sample(rng, n, n_dup).into_vec();
    for s in chosen {
        let first = queue.iter().position(|&q| q == s).expect("solution is queued");
        let at = rng.random_range(first + 1..=queue.len());
        queue.insert(at, s);
    }
    queue
}

/// Expected Improvement of a Gaussian `N(mean, std²)` over `best`.
pub fn expected_improvement(mean: f64, std: f64, best: f64) -> f64 {
    let diff = mean - best;
    if std > 0.0 {
        let eta = diff / std;
        (diff * normal::cdf(eta) + std * normal::pdf(eta)).max(0.0)
    } else {
        diff.max(0.0)
    }
}

/// `3·2^d`, the per-round labeling budget.
pub fn batch_size(d: usize) -> Result<usize, ProactiveError> {
    if d == 0 {
        return Err(ProactiveError::Config("dimension must be at least 1".into()));
    }
    if d > MAX_BATCH_DIM {
        return Err(ProactiveError::Config(format!(
            "3·2^{d} overflows the supported batch size (d ≤ {MAX_BATCH_DIM})"
        )));
    }
    Ok(3 << d)
}

/// Incumbent for EI: best aggregated label observed so far.
pub fn best_observed(labels: &[LabeledSolution]) -> Result<f64, ProactiveError> {
    labels
        .iter()
        .map(|l| l.y)
        .reduce(f64::max)
        .ok_or(ProactiveError::NoLabels)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    /// Candidate-pool size `a`.
    pub candidates: usize,
    /// Minimum unit-cube distance between batch members.
    pub min_distance: f64,
    pub max_retries: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            candidates: 1000,
            min_distance: 0.01,
            max_retries: 50,
        }
    }
}

/// Builds the next round's batch: `b` times, draw `a` uniform candidates and
/// keep the one with the largest EI (first on ties). A winner closer than
/// `min_distance` to an already-kept vector triggers a fresh pool.
pub fn select_next_batch(
    model: &GpPosterior,
    space: &DesignSpace,
    round: usize,
    b: usize,
    best: f64,
    config: &SelectionConfig,
    seed: u64,
) -> Result<RoundPlan, ProactiveError> {
    let a = config.candidates;
    if a == 0 || b == 0 {
        return Err(ProactiveError::Config("a and b must be at least 1".into()));
    }
    let mut rng = seed::rng(seed);
    let mut kept: Vec<(DesignVector, UnitVector)> = Vec::with_capacity(b);
    let mut warning = false;
    for _ in 0..b {
        let mut attempt = 0;
        loop {
            let (raw, unit) = best_of_pool(model, space, a, best, &mut rng);
            let clear = kept
                .iter()
                .all(|(_, k)| k.distance(&unit) >= config.min_distance);
            if clear || attempt >= config.max_retries {
                warning |= !clear;
                kept.push((raw, unit));
                break;
            }
            attempt += 1;
        }
    }
    Ok(RoundPlan {
        round,
        batch: kept.into_iter().map(|(v, _)| v).collect(),
        a,
        b,
        duplicate_warning: warning,
    })
}

fn best_of_pool<R: rand::Rng>(
    model: &GpPosterior,
    space: &DesignSpace,
    a: usize,
    best: f64,
    rng: &mut R,
) -> (DesignVector, UnitVector) {
    let mut top: Option<(f64, DesignVector, UnitVector)> = None;
    for _ in 0..a {
        let raw = space.sample_one(rng);
        let unit = space.normalize(&raw).expect("sampled vector has space dimension");
        let p = model.predict(&unit);
        let ei = expected_improvement(p.mean, p.std(), best);
        if top.as_ref().is_none_or(|(t, _, _)| ei > *t) {
            top = Some((ei, raw, unit));
        }
    }
    let (_, raw, unit) = top.expect("pool is non-empty");
    (raw, unit)
}
