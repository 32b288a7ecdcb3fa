//! Synthetic stand-in for a crowd of raters.
//!
//! Ground truth is an offset Gaussian bump in unit-cube coordinates with an
//! optional quadratic coupling between variables:
//!
//! ```text
//! ψ(u) = 1 + 4·exp(-Σ_k (u_k - p_k)²/(2 w_k²) - (u - p)ᵀ A (u - p))
//! ```
//!
//! A positive off-diagonal entry of `A` penalizes deviations of the same sign
//! in the two variables, so good solutions trade one against the other.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

use crate::design_space::{DesignSpace, DesignVector, UnitVector};
use crate::preference::ComparisonRecord;
use crate::proactive::{presentation_queue, RatingRecord};
use crate::seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("oracle fixture: {0}")]
    Fixture(String),
}

/// The JSON fixture `{peak, widths, interaction, rater_noise, raters_per_task}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleFixture {
    /// Optimum location in unit-cube coordinates.
    pub peak: Vec<f64>,
    pub widths: Vec<f64>,
    #[serde(default)]
    pub interaction: Vec<Vec<f64>>,
    pub rater_noise: f64,
    #[serde(default = "default_raters")]
    pub raters_per_task: usize,
}

fn default_raters() -> usize {
    20
}

impl OracleFixture {
    /// Toy fixture matching [`DesignSpace::toy_2d`].
    pub fn toy_2d() -> Self {
        Self {
            peak: vec![0.65, 0.35],
            widths: vec![0.15, 0.3],
            interaction: vec![],
            rater_noise: 0.5,
            raters_per_task: 20,
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, OracleError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| OracleError::Fixture(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| OracleError::Fixture(e.to_string()))
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticOracle {
    space: DesignSpace,
    fixture: OracleFixture,
}

impl SyntheticOracle {
    pub fn new(space: DesignSpace, fixture: OracleFixture) -> Result<Self, OracleError> {
        let d = space.dim();
        let f = &fixture;
        if f.peak.len() != d || f.widths.len() != d {
            return Err(OracleError::Fixture(format!(
                "peak and widths must have length {d}"
            )));
        }
        if f.peak.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(OracleError::Fixture("peak must lie in the unit cube".into()));
        }
        if f.widths.iter().any(|w| !(*w > 0.0)) {
            return Err(OracleError::Fixture("widths must be positive".into()));
        }
        if !f.interaction.is_empty() {
            if f.interaction.len() != d || f.interaction.iter().any(|r| r.len() != d) {
                return Err(OracleError::Fixture(format!("interaction must be {d}×{d}")));
            }
            for i in 0..d {
                for j in 0..i {
                    if f.interaction[i][j] != f.interaction[j][i] {
                        return Err(OracleError::Fixture("interaction must be symmetric".into()));
                    }
                }
            }
        }
        if !(f.rater_noise >= 0.0) {
            return Err(OracleError::Fixture("rater_noise must be non-negative".into()));
        }
        if f.raters_per_task == 0 {
            return Err(OracleError::Fixture("raters_per_task must be positive".into()));
        }
        Ok(Self { space, fixture })
    }

    pub fn space(&self) -> &DesignSpace {
        &self.space
    }

    pub fn fixture(&self) -> &OracleFixture {
        &self.fixture
    }

    pub fn raters_per_task(&self) -> usize {
        self.fixture.raters_per_task
    }

    /// Optimum in raw units.
    pub fn peak(&self) -> DesignVector {
        self.space
            .denormalize(&UnitVector(self.fixture.peak.clone()))
            .expect("peak has space dimension")
    }

    /// Noise-free preference in [1, 5].
    pub fn true_preference(&self, x: &DesignVector) -> f64 {
        let u = self.space.normalize(x).expect("vector has space dimension");
        self.true_preference_unit(&u)
    }

    pub fn true_preference_unit(&self, u: &UnitVector) -> f64 {
        let f = &self.fixture;
        let delta: Vec<f64> = u.0.iter().zip(&f.peak).map(|(x, p)| x - p).collect();
        let mut exponent: f64 = delta
            .iter()
            .zip(&f.widths)
            .map(|(d, w)| d * d / (2.0 * w * w))
            .sum();
        for (i, row) in f.interaction.iter().enumerate() {
            for (j, a) in row.iter().enumerate() {
                exponent += delta[i] * a * delta[j];
            }
        }
        1.0 + 4.0 * (-exponent).exp()
    }

    fn noise(&self, seed: u64, x: &DesignVector) -> f64 {
        let mut rng = seed::rng(seed::combine(seed, &[seed::hash_reals(x.as_slice())]));
        let z: f64 = StandardNormal.sample(&mut rng);
        self.fixture.rater_noise * z
    }

    /// `round(ψ(x) + ε)` with ties to even, clamped to 1..=5.
    pub fn rate_likert(&self, x: &DesignVector, rater_seed: u64) -> u8 {
        let perceived = self.true_preference(x) + self.noise(rater_seed, x);
        perceived.round_ties_even().clamp(1.0, 5.0) as u8
    }

    /// Majority vote of `raters_per_task` raters, each perceiving
    /// `ψ(x) + ε` with independent noise per solution. A tied count is
    /// broken by one extra rater. The noise of a rater is keyed by the
    /// solution itself, so swapping the arguments only swaps the roles.
    pub fn vote_pair(
        &self,
        (id_i, x_i): (usize, &DesignVector),
        (id_j, x_j): (usize, &DesignVector),
        seed: u64,
    ) -> ComparisonRecord {
        let true_i = self.true_preference(x_i);
        let true_j = self.true_preference(x_j);
        let hash_i = seed::hash_reals(x_i.as_slice());
        let hash_j = seed::hash_reals(x_j.as_slice());
        let prefers_i = |rater: usize| {
            let rater_seed = seed::combine(seed, &[rater as u64]);
            let pi = true_i + self.noise(rater_seed, x_i);
            let pj = true_j + self.noise(rater_seed, x_j);
            match pi.total_cmp(&pj) {
                std::cmp::Ordering::Greater => true,
                std::cmp::Ordering::Less => false,
                std::cmp::Ordering::Equal => hash_i < hash_j,
            }
        };
        let n = self.fixture.raters_per_task;
        let mut votes_i = (0..n).filter(|r| prefers_i(*r)).count() as u32;
        let mut votes_j = n as u32 - votes_i;
        if votes_i == votes_j {
            if prefers_i(n) {
                votes_i += 1;
            } else {
                votes_j += 1;
            }
        }
        if votes_i > votes_j {
            ComparisonRecord {
                winner: id_i,
                loser: id_j,
                votes_winner: votes_i,
                votes_loser: votes_j,
            }
        } else {
            ComparisonRecord {
                winner: id_j,
                loser: id_i,
                votes_winner: votes_j,
                votes_loser: votes_i,
            }
        }
    }

    /// Ratings from `raters_per_task` simulated raters for one labeling round.
    ///
    /// Each rater sees every solution in a private shuffled order with
    /// `duplicate_rate` of the queue re-presented; a re-presentation is an
    /// independent draw.
    pub fn simulate_ratings(
        &self,
        solution_ids: &[String],
        vectors: &[DesignVector],
        duplicate_rate: f64,
        seed: u64,
    ) -> Vec<RatingRecord> {
        let mut records = Vec::new();
        for rater in 0..self.fixture.raters_per_task {
            let rater_id = format!("sim-{rater:02}");
            let mut rng = seed::rng(seed::combine(seed, &[rater as u64, 0x5155]));
            let queue = presentation_queue(vectors.len(), duplicate_rate, &mut rng);
            let mut shown = vec![0u64; vectors.len()];
            for (position, &s) in queue.iter().enumerate() {
                let rater_seed = seed::combine(seed, &[rater as u64, shown[s]]);
                shown[s] += 1;
                records.push(RatingRecord {
                    rater_id: rater_id.clone(),
                    solution_id: solution_ids[s].clone(),
                    score: self.rate_likert(&vectors[s], rater_seed),
                    presentation_index: position as u32,
                });
            }
        }
        records
    }
}
