//! The experiment state machine: `init → round* → tune → evaluate`, with
//! `analyze` available once a model exists.

use log::info;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use feeler_core::analysis::{self, AnalysisReport};
use feeler_core::gp::{self, GpPosterior, GpSnapshot, Predictor};
use feeler_core::metrics::{self, RankedList};
use feeler_core::preference::{
    self, CandidateSet, ComparisonDataset, ComparisonRecord, MapOptions, PreferenceModel, PreferenceParams,
    PreferenceSnapshot, TuneOptions, TuneResult,
};
use feeler_core::proactive::{self, LabeledSolution, RatingRecord, RoundPlan};
use feeler_core::{seed, DesignSpace, OracleFixture, SyntheticOracle, UnitVector};

use crate::config::{ExperimentConfig, HoldoutSource, LabelSource, OracleRef};
use crate::error::PipelineError;
use crate::store::{self, Store};

/// Evidence values closer than this are treated as tied in the stage-1 grid.
const EVIDENCE_TIE: f64 = 1e-9;

/// Persisted stage-1 regressor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage1Artifact {
    /// Last round included in the training data.
    pub round: usize,
    /// Set once the final round has been split and the model refit.
    pub final_fit: bool,
    pub evidence: f64,
    pub snapshot: GpSnapshot,
}

/// Final-round split by solution id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub round: usize,
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage2Artifact {
    pub snapshot: PreferenceSnapshot,
    pub tuning: TuneResult,
}

/// One vote cast through the labeling service.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LiveVote {
    pub session: String,
    /// Index into the candidate pairs.
    pub pair: usize,
    /// Item id of the preferred solution.
    pub winner: usize,
}

/// Where a round's ratings come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RatingsInput {
    /// Whatever the experiment is configured for: simulated raters or the
    /// live ratings collected by the service.
    Configured,
    Csv(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Done(String),
    /// Nothing to do; the message says why.
    Noop(String),
}

impl Outcome {
    pub fn message(&self) -> &str {
        match self {
            Outcome::Done(m) | Outcome::Noop(m) => m,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Status {
    pub name: String,
    pub dim: usize,
    pub labels: LabelSource,
    pub rounds_total: usize,
    pub rounds_labeled: usize,
    pub pending_round: Option<usize>,
    pub stage1_model: bool,
    pub stage1_complete: bool,
    pub candidates: bool,
    pub stage2_model: bool,
    pub reports: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub model: String,
    pub ap: f64,
    pub ndcg: f64,
    /// Only the stage-1 model predicts on the label scale.
    pub mae: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub holdout_source: HoldoutSource,
    pub holdout_size: usize,
    pub ap_rho: f64,
    pub ndcg_folds: usize,
    /// Fold count actually used; lower than requested on tiny test sets.
    pub ndcg_folds_effective: usize,
    /// Rankings scored against the aggregated panel labels.
    pub rows: Vec<MetricRow>,
    /// The same rankings scored against the noise-free oracle preference;
    /// present when a synthetic oracle is configured.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth_rows: Option<Vec<MetricRow>>,
}

impl EvaluationReport {
    pub fn row(&self, model: &str) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.model == model)
    }

    pub fn truth_row(&self, model: &str) -> Option<&MetricRow> {
        self.truth_rows.as_ref()?.iter().find(|r| r.model == model)
    }
}

pub const FEELER: &str = "FEELER";
pub const PROACTIVE_GP: &str = "Proactive-GP";
pub const RANDOM: &str = "Random";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelChoice {
    Stage1,
    #[default]
    Stage2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AnalysisRequest {
    TopK {
        variable: String,
        k: usize,
        samples: usize,
        bins: usize,
    },
    Density {
        variable: String,
        grid_w: usize,
        grid_h: usize,
        samples: usize,
        bandwidth: Option<[f64; 2]>,
    },
    Joint {
        var_a: String,
        var_b: String,
        k: usize,
        samples: usize,
        bins_a: usize,
        bins_b: usize,
    },
}

impl AnalysisRequest {
    fn file_stem(&self) -> String {
        match self {
            AnalysisRequest::TopK { variable, k, .. } => format!("analysis-top{k}-{variable}"),
            AnalysisRequest::Density { variable, .. } => format!("analysis-density-{variable}"),
            AnalysisRequest::Joint { var_a, var_b, k, .. } => format!("analysis-joint{k}-{var_a}-{var_b}"),
        }
    }
}

pub struct Experiment {
    store: Store,
    space: DesignSpace,
    config: ExperimentConfig,
    oracle: Option<SyntheticOracle>,
}

fn child(config: &ExperimentConfig, tag: &str) -> u64 {
    seed::child_seed(config.master_seed, tag)
}

impl Experiment {
    /// Creates the experiment directory and the round-0 plan.
    pub fn init(dir: &Path, space: DesignSpace, mut config: ExperimentConfig) -> Result<Self, PipelineError> {
        config.check(space.dim())?;
        let fixture = config.oracle_fixture()?;
        let oracle = match (&fixture, config.labels) {
            (Some(f), LabelSource::Oracle) => Some(SyntheticOracle::new(space.clone(), f.clone())?),
            _ => None,
        };
        let store = Store::create(dir)?;
        let _lock = store.lock()?;
        if let Some(f) = &fixture {
            store.write_json(store::ORACLE, f)?;
            config.oracle = Some(OracleRef::Path(PathBuf::from(store::ORACLE)));
        }
        store.write_json(store::SPACE, &space)?;
        store.write_json(store::CONFIG, &config)?;
        let b = config.batch(space.dim())?;
        let plan = RoundPlan {
            round: 0,
            batch: space.sample_uniform(child(&config, "plan/0"), b),
            a: config.candidates,
            b,
            duplicate_warning: false,
        };
        store.write_json(store::PLANS, &vec![plan])?;
        store.write_json(store::LABELS, &Vec::<Vec<LabeledSolution>>::new())?;
        info!("initialized {} with a round-0 plan of {b}", dir.display());
        Ok(Self {
            store,
            space,
            config,
            oracle,
        })
    }

    pub fn open(dir: &Path) -> Result<Self, PipelineError> {
        let store = Store::open(dir)?;
        let space: DesignSpace = store.read_json(store::SPACE)?;
        let config: ExperimentConfig = store.read_json(store::CONFIG)?;
        let oracle = match (&config.oracle, config.labels) {
            (Some(OracleRef::Path(p)), LabelSource::Oracle) => {
                let fixture: OracleFixture = store::read_json(&dir.join(p))?;
                Some(SyntheticOracle::new(space.clone(), fixture)?)
            }
            (Some(OracleRef::Inline(f)), LabelSource::Oracle) => Some(SyntheticOracle::new(space.clone(), f.clone())?),
            _ => None,
        };
        Ok(Self {
            store,
            space,
            config,
            oracle,
        })
    }

    pub fn space(&self) -> &DesignSpace {
        &self.space
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn oracle(&self) -> Option<&SyntheticOracle> {
        self.oracle.as_ref()
    }

    pub fn labels(&self) -> Result<Vec<Vec<LabeledSolution>>, PipelineError> {
        Ok(self.store.read_json_opt(store::LABELS)?.unwrap_or_default())
    }

    /// Plans up to and including the pending one. Plans written past the
    /// last committed round are dropped.
    pub fn plans(&self) -> Result<Vec<RoundPlan>, PipelineError> {
        let mut plans: Vec<RoundPlan> = self.store.read_json(store::PLANS)?;
        let keep = (self.labels()?.len() + 1).min(self.config.rounds);
        plans.truncate(keep);
        Ok(plans)
    }

    /// Plan of the next round to label, if stage 1 is not complete.
    pub fn pending_plan(&self) -> Result<Option<RoundPlan>, PipelineError> {
        let l = self.labels()?.len();
        if l >= self.config.rounds {
            return Ok(None);
        }
        self.plans()?
            .into_iter()
            .nth(l)
            .map(Some)
            .ok_or_else(|| PipelineError::artifact(&self.store.path(store::PLANS), format!("missing plan for round {l}")))
    }

    pub fn stage1_complete(&self) -> Result<bool, PipelineError> {
        Ok(self.labels()?.len() >= self.config.rounds)
    }

    pub fn status(&self) -> Result<Status, PipelineError> {
        let labeled = self.labels()?.len();
        let mut reports = Vec::new();
        if let Ok(entries) = std::fs::read_dir(self.store.path(store::REPORTS)) {
            for e in entries.flatten() {
                let name = e.file_name().to_string_lossy().into_owned();
                if name.ends_with(".json") {
                    reports.push(name);
                }
            }
        }
        reports.sort();
        Ok(Status {
            name: self.space.name().to_string(),
            dim: self.space.dim(),
            labels: self.config.labels,
            rounds_total: self.config.rounds,
            rounds_labeled: labeled,
            pending_round: (labeled < self.config.rounds).then_some(labeled),
            stage1_model: self.store.exists(store::STAGE1),
            stage1_complete: labeled >= self.config.rounds,
            candidates: self.store.exists(store::CANDIDATES),
            stage2_model: self.store.exists(store::STAGE2),
            reports,
        })
    }

    fn require_oracle(&self, what: &str) -> Result<&SyntheticOracle, PipelineError> {
        self.oracle
            .as_ref()
            .ok_or_else(|| PipelineError::Ordering(format!("{what} needs an oracle; this experiment is in live mode")))
    }

    /// Labels the pending round, refits the stage-1 model and plans the next
    /// round (or, after the final round, splits it and fits the final model).
    pub fn round(&self, input: RatingsInput) -> Result<Outcome, PipelineError> {
        let _lock = self.store.lock()?;
        let mut labels = self.labels()?;
        let l = labels.len();
        let Some(plan) = self.pending_plan()? else {
            return Ok(Outcome::Noop(format!("all {} rounds are labeled", self.config.rounds)));
        };
        let records = match input {
            RatingsInput::Csv(path) => read_ratings(&path)?,
            RatingsInput::Configured => match self.config.labels {
                LabelSource::Oracle => self.require_oracle("simulated rating")?.simulate_ratings(
                    &plan.solution_ids(),
                    &plan.batch,
                    self.config.duplicate_rate,
                    child(&self.config, &format!("ratings/{l}")),
                ),
                LabelSource::Live => read_ratings(&self.store.live_ratings_path(l))?,
            },
        };
        check_rating_ids(&plan, &records)?;
        let (labeled, retained) = proactive::label_round(&plan, &records)?;
        let mut csv_bytes = Vec::new();
        proactive::write_ratings_csv(&mut csv_bytes, &records)?;
        store::write_atomic(&self.store.ratings_path(l), &csv_bytes)?;
        labels.push(labeled);

        let mut plans = self.plans()?;
        plans.truncate(l + 1);
        let message = if l + 1 == self.config.rounds {
            let split = self.split_final(&labels[l]);
            let (model, evidence) = self.fit_final(&labels, &split)?;
            self.store.write_json(
                store::STAGE1,
                &Stage1Artifact {
                    round: l,
                    final_fit: true,
                    evidence,
                    snapshot: model.snapshot(),
                },
            )?;
            self.store.write_json(store::SPLIT, &split)?;
            format!(
                "labeled round {l} ({} raters retained); stage 1 complete, final model fit on {} solutions",
                retained.len(),
                model.len()
            )
        } else {
            let all: Vec<LabeledSolution> = labels.iter().flatten().cloned().collect();
            let (model, evidence) = self.fit_stage1(&all, None)?;
            let best = proactive::best_observed(&all)?;
            let next = proactive::select_next_batch(
                &model,
                &self.space,
                l + 1,
                self.config.batch(self.space.dim())?,
                best,
                &self.config.selection(),
                child(&self.config, &format!("select/{}", l + 1)),
            )?;
            self.store.write_json(
                store::STAGE1,
                &Stage1Artifact {
                    round: l,
                    final_fit: false,
                    evidence,
                    snapshot: model.snapshot(),
                },
            )?;
            plans.push(next);
            format!(
                "labeled round {l} ({} raters retained); planned round {} with best observed {best:.3}",
                retained.len(),
                l + 1
            )
        };
        self.store.write_json(store::PLANS, &plans)?;
        self.store.write_json(store::LABELS, &labels)?;
        info!("{message}");
        Ok(Outcome::Done(message))
    }

    fn split_final(&self, last: &[LabeledSolution]) -> Split {
        use rand::seq::SliceRandom;
        let mut ids: Vec<String> = last.iter().map(|s| s.solution_id.clone()).collect();
        ids.shuffle(&mut seed::rng(child(&self.config, "split")));
        let n = ids.len();
        let n_test = (0.1 * n as f64).round() as usize;
        let n_val = (0.1 * n as f64).round() as usize;
        let test = ids.split_off(n - n_test);
        let validation = ids.split_off(n - n_test - n_val);
        Split {
            round: last.first().map_or(0, |s| s.round),
            train: ids,
            validation,
            test,
        }
    }

    fn fit_final(&self, labels: &[Vec<LabeledSolution>], split: &Split) -> Result<(GpPosterior, f64), PipelineError> {
        let (last, previous) = labels.split_last().expect("at least one round");
        let mut train: Vec<LabeledSolution> = previous.iter().flatten().cloned().collect();
        train.extend(last.iter().filter(|s| split.train.contains(&s.solution_id)).cloned());
        let validation: Vec<LabeledSolution> =
            last.iter().filter(|s| split.validation.contains(&s.solution_id)).cloned().collect();
        self.fit_stage1(&train, Some(&validation))
    }

    /// Evidence-grid fit; near-ties go to the lowest validation MAE when a
    /// validation set is given.
    fn fit_stage1(
        &self,
        train: &[LabeledSolution],
        validation: Option<&[LabeledSolution]>,
    ) -> Result<(GpPosterior, f64), PipelineError> {
        let x: Vec<UnitVector> = train
            .iter()
            .map(|s| self.space.normalize(&s.vector))
            .collect::<Result<_, _>>()?;
        let y: Vec<f64> = train.iter().map(|s| s.y).collect();
        let selection = gp::evaluate_grid(&x, &y, &gp::default_grid(self.config.kernel_norm))?;
        let mut params = selection.best;
        if let Some(val) = validation.filter(|v| !v.is_empty()) {
            let mut best_mae = f64::INFINITY;
            for (p, ev) in &selection.evaluated {
                if selection.best_evidence - ev > EVIDENCE_TIE {
                    continue;
                }
                let m = GpPosterior::fit(x.clone(), y.clone(), *p)?;
                let preds: Vec<f64> = val
                    .iter()
                    .map(|s| self.space.normalize(&s.vector).map(|u| m.predict_mean(&u)))
                    .collect::<Result<_, _>>()?;
                let labels: Vec<f64> = val.iter().map(|s| s.y).collect();
                let mae = metrics::mae(&labels, &preds)?;
                if mae < best_mae {
                    best_mae = mae;
                    params = *p;
                }
            }
        }
        let model = GpPosterior::fit(x, y, params)?;
        let evidence = model.log_marginal_likelihood();
        Ok((model, evidence))
    }

    pub fn load_stage1(&self) -> Result<GpPosterior, PipelineError> {
        let artifact: Stage1Artifact = self
            .store
            .read_json_opt(store::STAGE1)?
            .ok_or_else(|| PipelineError::Ordering("no stage-1 model yet; run `round` first".into()))?;
        Ok(GpPosterior::from_snapshot(artifact.snapshot)?)
    }

    pub fn load_stage2(&self) -> Result<PreferenceModel, PipelineError> {
        let artifact: Stage2Artifact = self
            .store
            .read_json_opt(store::STAGE2)?
            .ok_or_else(|| PipelineError::Ordering("no stage-2 model yet; run `tune` first".into()))?;
        let data: ComparisonDataset = self.store.read_json(store::COMPARISONS)?;
        Ok(PreferenceModel::from_snapshot(artifact.snapshot, data.relations())?)
    }

    pub fn candidates(&self) -> Result<Option<CandidateSet>, PipelineError> {
        self.store.read_json_opt(store::CANDIDATES)
    }

    fn ensure_candidates(&self) -> Result<CandidateSet, PipelineError> {
        if let Some(c) = self.candidates()? {
            return Ok(c);
        }
        if !self.stage1_complete()? {
            return Err(PipelineError::Ordering(
                "stage 1 is not complete; label every round with `round` before `tune`".into(),
            ));
        }
        let model = self.load_stage1()?;
        let c = preference::generate_candidate_pairs(
            &model,
            &self.space,
            self.config.pool_size,
            self.config.top_n,
            self.config.pairs,
            child(&self.config, "candidates"),
        )?;
        self.store.write_json(store::CANDIDATES, &c)?;
        Ok(c)
    }

    /// Writes the comparison candidates if they do not exist yet.
    pub fn prepare_candidates(&self) -> Result<CandidateSet, PipelineError> {
        if let Some(c) = self.candidates()? {
            return Ok(c);
        }
        let _lock = self.store.lock()?;
        self.ensure_candidates()
    }

    pub fn live_votes(&self) -> Result<Vec<LiveVote>, PipelineError> {
        let path = self.store.live_votes_path();
        if path.exists() {
            store::read_json(&path)
        } else {
            Ok(Vec::new())
        }
    }

    fn relations(&self, c: &CandidateSet) -> Result<Vec<ComparisonRecord>, PipelineError> {
        match self.config.labels {
            LabelSource::Oracle => {
                let oracle = self.require_oracle("simulated voting")?;
                let votes = child(&self.config, "votes");
                Ok(c.pairs
                    .iter()
                    .enumerate()
                    .map(|(m, &(i, j))| {
                        oracle.vote_pair((i, &c.vectors[i]), (j, &c.vectors[j]), seed::combine(votes, &[m as u64]))
                    })
                    .collect())
            }
            LabelSource::Live => Ok(tally_votes(c, &self.live_votes()?, self.config.raters_required)),
        }
    }

    /// Builds candidate pairs, collects votes and fits the tuned stage-2 model.
    pub fn tune(&self) -> Result<Outcome, PipelineError> {
        let _lock = self.store.lock()?;
        if self.store.exists(store::STAGE2) {
            return Ok(Outcome::Noop("stage-2 model already exists".into()));
        }
        let c = self.ensure_candidates()?;
        let relations = self.relations(&c)?;
        if relations.is_empty() {
            return Ok(Outcome::Noop(format!(
                "{} candidate pairs are waiting for votes from the labeling service",
                c.pairs.len()
            )));
        }
        let data = ComparisonDataset::new(c.items.clone(), relations)?;
        let init = PreferenceParams {
            width: self.config.tune.init_width,
            noise: self.config.tune.init_noise,
            norm: self.config.kernel_norm,
        };
        let opts = TuneOptions {
            steps: self.config.tune.steps,
            learning_rate: self.config.tune.learning_rate,
            ..TuneOptions::default()
        };
        let tuning = preference::tune_hyperparameters(&data, init, &opts)?;
        let model = PreferenceModel::fit(&data, tuning.params, &MapOptions::default())?;
        let message = format!(
            "tuned on {} relations: width {:.4}, noise {:.4}, evidence {:.4} (from {:.4})",
            data.relations().len(),
            tuning.params.width,
            tuning.params.noise,
            tuning.evidence,
            tuning.initial_evidence
        );
        self.store.write_json(store::COMPARISONS, &data)?;
        self.store.write_json(
            store::STAGE2,
            &Stage2Artifact {
                snapshot: model.snapshot(),
                tuning,
            },
        )?;
        info!("{message}");
        Ok(Outcome::Done(message))
    }

    /// Held-out solutions with aggregated labels.
    fn holdout(&self, source: HoldoutSource) -> Result<Vec<LabeledSolution>, PipelineError> {
        match source {
            HoldoutSource::Split => {
                let split: Split = self
                    .store
                    .read_json_opt(store::SPLIT)?
                    .ok_or_else(|| PipelineError::Ordering("final round has not been split yet".into()))?;
                let labels = self.labels()?;
                let test: Vec<LabeledSolution> = labels[split.round]
                    .iter()
                    .filter(|s| split.test.contains(&s.solution_id))
                    .cloned()
                    .collect();
                if test.len() < 2 {
                    return Err(PipelineError::Holdout(format!(
                        "the test split has {} solution(s); use a larger batch size or holdout_source = \"oracle\"",
                        test.len()
                    )));
                }
                Ok(test)
            }
            HoldoutSource::Oracle => {
                // Fresh promising solutions: the best of a uniform pool under
                // the stage-1 mean, the same region comparison items come from.
                let oracle = self.require_oracle("an oracle holdout")?;
                let model = self.load_stage1()?;
                let pool = preference::generate_candidate_pairs(
                    &model,
                    &self.space,
                    self.config.holdout_pool,
                    self.config.holdout_size,
                    1,
                    child(&self.config, "holdout"),
                )?;
                let plan = RoundPlan {
                    round: self.config.rounds,
                    batch: pool.vectors,
                    a: self.config.holdout_pool,
                    b: self.config.holdout_size,
                    duplicate_warning: false,
                };
                let records = oracle.simulate_ratings(
                    &plan.solution_ids(),
                    &plan.batch,
                    self.config.duplicate_rate,
                    child(&self.config, "holdout/ratings"),
                );
                Ok(proactive::label_round(&plan, &records)?.0)
            }
        }
    }

    /// Ranks a held-out set with both models and a random baseline.
    pub fn evaluate(&self, source: Option<HoldoutSource>) -> Result<EvaluationReport, PipelineError> {
        let _lock = self.store.lock()?;
        let stage2 = self.load_stage2()?;
        let stage1 = self.load_stage1()?;
        let source = source.unwrap_or(self.config.holdout_source);
        let holdout = self.holdout(source)?;
        let units: Vec<UnitVector> = holdout
            .iter()
            .map(|s| self.space.normalize(&s.vector))
            .collect::<Result<_, _>>()?;
        let ids: Vec<String> = holdout.iter().map(|s| s.solution_id.clone()).collect();
        let y: Vec<f64> = holdout.iter().map(|s| s.y).collect();
        let folds = self.config.ndcg_folds.min(holdout.len());
        let s2: Vec<f64> = units.iter().map(|u| stage2.predict_mean(u)).collect();
        let s1: Vec<f64> = units.iter().map(|u| stage1.predict_mean(u)).collect();
        let random: Vec<f64> = {
            use rand::Rng;
            let mut rng = seed::rng(child(&self.config, "random-ranking"));
            (0..units.len()).map(|_| rng.random::<f64>()).collect()
        };
        let score = |target: &[f64]| -> Result<Vec<MetricRow>, PipelineError> {
            let label = RankedList::from_scores(ids.iter().cloned().zip(target.iter().copied()).collect())?;
            let row = |model: &str, scores: &[f64], mae: Option<f64>| -> Result<MetricRow, PipelineError> {
                let pred = RankedList::from_scores(ids.iter().cloned().zip(scores.iter().copied()).collect())?;
                Ok(MetricRow {
                    model: model.to_string(),
                    ap: metrics::average_precision(&label, &pred, self.config.ap_rho)?,
                    ndcg: metrics::ndcg(&label, &pred, folds)?,
                    mae,
                })
            };
            Ok(vec![
                row(FEELER, &s2, None)?,
                row(PROACTIVE_GP, &s1, Some(metrics::mae(target, &s1)?))?,
                row(RANDOM, &random, None)?,
            ])
        };
        let truth_rows = match &self.oracle {
            Some(oracle) => {
                let truth: Vec<f64> = holdout.iter().map(|s| oracle.true_preference(&s.vector)).collect();
                Some(score(&truth)?)
            }
            None => None,
        };
        let report = EvaluationReport {
            holdout_source: source,
            holdout_size: holdout.len(),
            ap_rho: self.config.ap_rho,
            ndcg_folds: self.config.ndcg_folds,
            ndcg_folds_effective: folds,
            rows: score(&y)?,
            truth_rows,
        };
        self.store.write_json(&format!("{}/evaluation.json", store::REPORTS), &report)?;
        Ok(report)
    }

    /// Runs one variable analysis and writes `reports/<stem>.json` and `.csv`.
    pub fn analyze(
        &self,
        request: &AnalysisRequest,
        model: ModelChoice,
        seed_override: Option<u64>,
    ) -> Result<(AnalysisReport, PathBuf), PipelineError> {
        let _lock = self.store.lock()?;
        let seed_value = seed_override.unwrap_or_else(|| child(&self.config, "analysis"));
        let predictor: Box<dyn Predictor> = match model {
            ModelChoice::Stage1 => Box::new(self.load_stage1()?),
            ModelChoice::Stage2 => Box::new(self.load_stage2()?),
        };
        let p = predictor.as_ref();
        let report = match request {
            AnalysisRequest::TopK {
                variable,
                k,
                samples,
                bins,
            } => AnalysisReport::TopK(analysis::top_k_distribution(
                p,
                &self.space,
                *samples,
                *k,
                variable,
                *bins,
                seed_value,
            )?),
            AnalysisRequest::Density {
                variable,
                grid_w,
                grid_h,
                samples,
                bandwidth,
            } => AnalysisReport::Density(analysis::density_2d(
                p,
                &self.space,
                variable,
                *grid_w,
                *grid_h,
                *samples,
                *bandwidth,
                seed_value,
            )?),
            AnalysisRequest::Joint {
                var_a,
                var_b,
                k,
                samples,
                bins_a,
                bins_b,
            } => AnalysisReport::Joint(analysis::variable_correlation(
                p,
                &self.space,
                var_a,
                var_b,
                *k,
                *samples,
                *bins_a,
                *bins_b,
                seed_value,
            )?),
        };
        let stem = request.file_stem();
        let json_path = self.store.report_path(&format!("{stem}.json"));
        store::write_json(&json_path, &report)?;
        store::write_atomic(&self.store.report_path(&format!("{stem}.csv")), report.to_csv().as_bytes())?;
        Ok((report, json_path))
    }

    /// Labels every round, tunes and evaluates with the configured sources.
    pub fn run_to_completion(&self) -> Result<EvaluationReport, PipelineError> {
        while self.pending_plan()?.is_some() {
            self.round(RatingsInput::Configured)?;
        }
        self.tune()?;
        self.evaluate(None)
    }
}

fn read_ratings(path: &Path) -> Result<Vec<RatingRecord>, PipelineError> {
    let f = std::fs::File::open(path).map_err(|e| PipelineError::io(path, e))?;
    proactive::read_ratings_csv(f).map_err(|e| PipelineError::artifact(path, e.to_string()))
}

fn check_rating_ids(plan: &RoundPlan, records: &[RatingRecord]) -> Result<(), PipelineError> {
    let ids = plan.solution_ids();
    if let Some(r) = records.iter().find(|r| !ids.contains(&r.solution_id)) {
        return Err(PipelineError::Config {
            field: "solution_id".into(),
            message: format!("'{}' is not part of round {}", r.solution_id, plan.round),
        });
    }
    Ok(())
}

/// Majority per candidate pair over sessions; pairs below `required` votes or
/// with a tie are left out.
pub fn tally_votes(c: &CandidateSet, votes: &[LiveVote], required: usize) -> Vec<ComparisonRecord> {
    let mut counts: BTreeMap<usize, (u32, u32)> = BTreeMap::new();
    for v in votes {
        let Some(&(i, _)) = c.pairs.get(v.pair) else { continue };
        let e = counts.entry(v.pair).or_default();
        if v.winner == i {
            e.0 += 1;
        } else {
            e.1 += 1;
        }
    }
    counts
        .into_iter()
        .filter(|(_, (a, b))| (a + b) as usize >= required && a != b)
        .map(|(m, (a, b))| {
            let (i, j) = c.pairs[m];
            if a > b {
                ComparisonRecord {
                    winner: i,
                    loser: j,
                    votes_winner: a,
                    votes_loser: b,
                }
            } else {
                ComparisonRecord {
                    winner: j,
                    loser: i,
                    votes_winner: b,
                    votes_loser: a,
                }
            }
        })
        .collect()
}
