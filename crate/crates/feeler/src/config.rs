//! Experiment configuration, read from JSON. Every field has a desk-scale
//! default so `{}` is a valid config.

use feeler_core::gp::KernelNorm;
use feeler_core::oracle::OracleFixture;
use feeler_core::proactive::{self, SelectionConfig};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::error::PipelineError;

/// Where labels and votes come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelSource {
    /// Simulated raters driven by the oracle fixture.
    #[default]
    Oracle,
    /// Humans through the labeling service.
    Live,
}

/// Oracle fixture given inline or as a path relative to the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OracleRef {
    Inline(OracleFixture),
    Path(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HoldoutSource {
    /// The best `holdout_size` of a fresh uniform pool under the stage-1
    /// mean, labeled by the simulated panel.
    #[default]
    Oracle,
    /// The test tenth of the final round.
    Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneConfig {
    pub init_width: f64,
    pub init_noise: f64,
    pub steps: usize,
    pub learning_rate: f64,
}

impl Default for TuneConfig {
    fn default() -> Self {
        Self {
            init_width: 0.3,
            init_noise: 1.0,
            steps: 30,
            learning_rate: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    /// Labeled stage-1 rounds; round 0 is uniform, later rounds use EI.
    pub rounds: usize,
    /// Candidate pool per EI selection.
    pub candidates: usize,
    /// Fixed batch size; `3·2^d` capped at `batch_cap` when absent.
    pub batch_size: Option<usize>,
    pub batch_cap: usize,
    pub min_distance: f64,
    pub max_retries: usize,
    pub duplicate_rate: f64,
    pub kernel_norm: KernelNorm,
    /// Uniform samples scored when building comparison candidates.
    pub pool_size: usize,
    /// Best-scoring samples kept as comparison items.
    pub top_n: usize,
    pub pairs: usize,
    pub tune: TuneConfig,
    pub ap_rho: f64,
    pub ndcg_folds: usize,
    pub holdout_source: HoldoutSource,
    pub holdout_size: usize,
    /// Uniform pool the oracle holdout is drawn from.
    pub holdout_pool: usize,
    pub labels: LabelSource,
    pub oracle: Option<OracleRef>,
    /// Sessions needed per solution or pair in live mode.
    pub raters_required: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            master_seed: 0,
            rounds: 2,
            candidates: 1000,
            batch_size: None,
            batch_cap: 64,
            min_distance: 0.01,
            max_retries: 50,
            duplicate_rate: 0.1,
            kernel_norm: KernelNorm::L2sq,
            pool_size: 2000,
            top_n: 50,
            pairs: 100,
            tune: TuneConfig::default(),
            ap_rho: feeler_core::metrics::DEFAULT_AP_RHO,
            ndcg_folds: feeler_core::metrics::DEFAULT_NDCG_FOLDS,
            holdout_source: HoldoutSource::Oracle,
            holdout_size: 150,
            holdout_pool: 6000,
            labels: LabelSource::Oracle,
            oracle: None,
            raters_required: 1,
        }
    }
}

fn field(name: &str, message: impl Into<String>) -> PipelineError {
    PipelineError::Config {
        field: name.to_string(),
        message: message.into(),
    }
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(text).map_err(|e| PipelineError::Config {
            field: format!("line {}, column {}", e.line(), e.column()),
            message: e.to_string(),
        })
    }

    pub fn from_file(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        let mut config = Self::from_json_str(&text)?;
        if let Some(OracleRef::Path(p)) = &config.oracle {
            let resolved = path.parent().unwrap_or(Path::new(".")).join(p);
            config.oracle = Some(OracleRef::Path(resolved));
        }
        Ok(config)
    }

    pub fn check(&self, dim: usize) -> Result<(), PipelineError> {
        if self.candidates == 0 {
            return Err(field("candidates", "must be at least 1"));
        }
        if self.batch_size == Some(0) {
            return Err(field("batch_size", "must be at least 1"));
        }
        if self.batch_cap == 0 {
            return Err(field("batch_cap", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.duplicate_rate) {
            return Err(field("duplicate_rate", "must be in [0, 1)"));
        }
        if !(self.min_distance >= 0.0) {
            return Err(field("min_distance", "must be non-negative"));
        }
        if self.top_n < 2 {
            return Err(field("top_n", "must be at least 2"));
        }
        if self.top_n > self.pool_size {
            return Err(field("top_n", format!("exceeds pool_size ({})", self.pool_size)));
        }
        if self.pairs == 0 {
            return Err(field("pairs", "must be at least 1"));
        }
        if !(self.ap_rho > 0.0 && self.ap_rho < 1.0) {
            return Err(field("ap_rho", "must be in (0, 1)"));
        }
        if self.ndcg_folds == 0 {
            return Err(field("ndcg_folds", "must be at least 1"));
        }
        if !(self.tune.init_width > 0.0) || !(self.tune.init_noise > 0.0) {
            return Err(field("tune", "initial width and noise must be positive"));
        }
        if self.holdout_source == HoldoutSource::Oracle && self.holdout_size < 2 {
            return Err(field("holdout_size", "must be at least 2"));
        }
        if self.holdout_source == HoldoutSource::Oracle && self.holdout_pool < self.holdout_size {
            return Err(field("holdout_pool", format!("smaller than holdout_size ({})", self.holdout_size)));
        }
        if self.labels == LabelSource::Oracle && self.oracle.is_none() {
            return Err(field("oracle", "required when labels = \"oracle\""));
        }
        if self.raters_required == 0 {
            return Err(field("raters_required", "must be at least 1"));
        }
        self.batch(dim).map(|_| ())
    }

    /// Batch size for a space of dimension `dim`.
    pub fn batch(&self, dim: usize) -> Result<usize, PipelineError> {
        match self.batch_size {
            Some(b) => Ok(b),
            None => Ok(proactive::batch_size(dim)?.min(self.batch_cap)),
        }
    }

    pub fn selection(&self) -> SelectionConfig {
        SelectionConfig {
            candidates: self.candidates,
            min_distance: self.min_distance,
            max_retries: self.max_retries,
        }
    }

    /// Inline fixture, loading it from disk if referenced by path.
    pub fn oracle_fixture(&self) -> Result<Option<OracleFixture>, PipelineError> {
        match &self.oracle {
            None => Ok(None),
            Some(OracleRef::Inline(f)) => Ok(Some(f.clone())),
            Some(OracleRef::Path(p)) => Ok(Some(OracleFixture::from_file(p)?)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_desk_default() {
        let c = ExperimentConfig::from_json_str("{}").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(c.batch(2).unwrap(), 12);
        assert_eq!(c.batch(9).unwrap(), 64);
    }

    #[test]
    fn cap_and_fixed_batch() {
        let c = ExperimentConfig::from_json_str(r#"{"batch_cap": 8}"#).unwrap();
        assert_eq!(c.batch(2).unwrap(), 8);
        let c = ExperimentConfig::from_json_str(r#"{"batch_size": 5}"#).unwrap();
        assert_eq!(c.batch(9).unwrap(), 5);
        assert!(ExperimentConfig::default().batch(25).is_err());
    }

    #[test]
    fn unknown_field_is_located() {
        let err = ExperimentConfig::from_json_str("{\n  \"roundz\": 3\n}").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "{msg}");
        assert!(msg.contains("roundz"), "{msg}");
    }

    #[test]
    fn oracle_mode_needs_fixture() {
        let err = ExperimentConfig::default().check(2).unwrap_err();
        assert!(err.to_string().starts_with("oracle:"));
        let live = ExperimentConfig {
            labels: LabelSource::Live,
            ..Default::default()
        };
        live.check(2).unwrap();
    }

    #[test]
    fn inline_and_path_oracle() {
        let c: ExperimentConfig = serde_json::from_str(
            r#"{"oracle": {"peak": [0.5, 0.5], "widths": [0.2, 0.2], "rater_noise": 0.5}}"#,
        )
        .unwrap();
        assert!(matches!(c.oracle, Some(OracleRef::Inline(_))));
        let c: ExperimentConfig = serde_json::from_str(r#"{"oracle": "toy.json"}"#).unwrap();
        assert_eq!(c.oracle, Some(OracleRef::Path("toy.json".into())));
    }
}
