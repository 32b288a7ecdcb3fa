use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use feeler::config::ExperimentConfig;
use feeler::pipeline::{AnalysisRequest, Experiment, ModelChoice, Outcome, RatingsInput};
use feeler::{HoldoutSource, PipelineError};
use feeler_core::metrics::{self, RankedList};
use feeler_core::DesignSpace;
use serde_json::json;

#[derive(Parser)]
#[command(name = "feeler", version, about = "Two-stage collective preference learning for UI design variables")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Create an experiment directory with its round-0 plan.
    Init {
        #[arg(long)]
        dir: PathBuf,
        /// Design-space JSON; a built-in space can be picked with --preset instead.
        #[arg(long, conflicts_with = "preset")]
        space: Option<PathBuf>,
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides `master_seed` from the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Label the pending stage-1 round and plan the next one.
    Round {
        #[arg(long)]
        dir: PathBuf,
        /// Ratings CSV to ingest instead of the configured label source.
        #[arg(long)]
        ratings: Option<PathBuf>,
    },
    /// Build comparison pairs, collect votes and fit the stage-2 model.
    Tune {
        #[arg(long)]
        dir: PathBuf,
    },
    /// Score both models on held-out solutions.
    Evaluate {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, value_enum)]
        holdout: Option<Holdout>,
    },
    /// Summarize what a model predicts about design variables.
    Analyze(AnalyzeArgs),
    /// Label all rounds, tune and evaluate in one go (oracle mode).
    Run {
        #[arg(long)]
        dir: PathBuf,
    },
    /// Print the experiment state.
    Status {
        #[arg(long)]
        dir: PathBuf,
    },
    /// AP, NDCG and MAE of a predicted ranking against a label ranking.
    Metrics {
        /// `id,score` CSV with the reference scores.
        #[arg(long)]
        labels: PathBuf,
        /// `id,score` CSV with the predicted scores.
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long, default_value_t = metrics::DEFAULT_AP_RHO)]
        rho: f64,
        #[arg(long, default_value_t = metrics::DEFAULT_NDCG_FOLDS)]
        folds: usize,
    },
    /// Run the labeling and what-if HTTP service.
    Serve {
        /// One experiment, or a directory of experiments.
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Toy2d,
    SearchBox,
    NewsFeed,
}

#[derive(Clone, Copy, ValueEnum)]
enum Holdout {
    Oracle,
    Split,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    TopK,
    Density,
    Joint,
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Stage1,
    Stage2,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    dir: PathBuf,
    #[arg(long, value_enum, default_value = "top-k")]
    kind: Kind,
    #[arg(long)]
    variable: String,
    /// Second variable for `joint`.
    #[arg(long)]
    other: Option<String>,
    #[arg(long, default_value_t = 500)]
    k: usize,
    #[arg(long, default_value_t = 30_000)]
    samples: usize,
    #[arg(long, default_value_t = 30)]
    bins: usize,
    #[arg(long, default_value_t = 40)]
    grid: usize,
    #[arg(long, value_enum, default_value = "stage2")]
    model: Model,
    #[arg(long)]
    seed: Option<u64>,
}

fn print_outcome(o: Outcome) {
    println!("{}", o.message());
}

fn print_json(v: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn init(
    dir: &Path,
    space: Option<PathBuf>,
    preset: Option<Preset>,
    config: Option<PathBuf>,
    seed: Option<u64>,
) -> Result<(), PipelineError> {
    let space = match (space, preset) {
        (Some(p), _) => DesignSpace::from_file(&p)?,
        (None, Some(Preset::SearchBox)) => DesignSpace::search_box_9d(),
        (None, Some(Preset::NewsFeed)) => DesignSpace::news_feed_8d(),
        (None, _) => DesignSpace::toy_2d(),
    };
    let mut config = match config {
        Some(p) => ExperimentConfig::from_file(&p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = seed {
        config.master_seed = s;
    }
    let exp = Experiment::init(dir, space, config)?;
    let plan = exp.pending_plan()?.expect("fresh experiment has a plan");
    println!("initialized {} with a round-0 plan of {} solutions", dir.display(), plan.batch.len());
    Ok(())
}

fn analyze(a: AnalyzeArgs) -> Result<(), PipelineError> {
    let exp = Experiment::open(&a.dir)?;
    let request = match a.kind {
        Kind::TopK => AnalysisRequest::TopK {
            variable: a.variable,
            k: a.k,
            samples: a.samples,
            bins: a.bins,
        },
        Kind::Density => AnalysisRequest::Density {
            variable: a.variable,
            grid_w: a.grid,
            grid_h: a.grid,
            samples: a.samples,
            bandwidth: None,
        },
        Kind::Joint => AnalysisRequest::Joint {
            var_a: a.variable,
            var_b: a.other.ok_or_else(|| PipelineError::Config {
                field: "other".into(),
                message: "joint analysis needs --other".into(),
            })?,
            k: a.k,
            samples: a.samples,
            bins_a: a.bins,
            bins_b: a.bins,
        },
    };
    let model = match a.model {
        Model::Stage1 => ModelChoice::Stage1,
        Model::Stage2 => ModelChoice::Stage2,
    };
    let (_, path) = exp.analyze(&request, model, a.seed)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn read_ranking(path: &Path) -> Result<RankedList, PipelineError> {
    let f = std::fs::File::open(path).map_err(|e| PipelineError::io(path, e))?;
    RankedList::from_csv(f).map_err(|e| PipelineError::artifact(path, e.to_string()))
}

fn metrics_report(labels: &Path, predictions: &Path, rho: f64, folds: usize) -> Result<serde_json::Value, PipelineError> {
    let label = read_ranking(labels)?;
    let pred = read_ranking(predictions)?;
    let by_id: BTreeMap<&str, f64> = pred.entries().iter().map(|(id, s)| (id.as_str(), *s)).collect();
    let (y, p): (Vec<f64>, Vec<f64>) = label
        .entries()
        .iter()
        .filter_map(|(id, s)| by_id.get(id.as_str()).map(|q| (*s, *q)))
        .unzip();
    Ok(json!({
        "ap": metrics::average_precision(&label, &pred, rho)?,
        "ndcg": metrics::ndcg(&label, &pred, folds)?,
        "mae": metrics::mae(&y, &p)?,
        "params": { "rho": rho, "folds": folds, "n": label.len() },
    }))
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Init {
            dir,
            space,
            preset,
            config,
            seed,
        } => init(&dir, space, preset, config, seed),
        Command::Round { dir, ratings } => {
            let input = ratings.map_or(RatingsInput::Configured, RatingsInput::Csv);
            Experiment::open(&dir)?.round(input).map(print_outcome)
        }
        Command::Tune { dir } => Experiment::open(&dir)?.tune().map(print_outcome),
        Command::Evaluate { dir, holdout } => {
            let source = holdout.map(|h| match h {
                Holdout::Oracle => HoldoutSource::Oracle,
                Holdout::Split => HoldoutSource::Split,
            });
            Experiment::open(&dir)?.evaluate(source).map(|r| print_json(&r))
        }
        Command::Analyze(a) => analyze(a),
        Command::Run { dir } => Experiment::open(&dir)?.run_to_completion().map(|r| print_json(&r)),
        Command::Status { dir } => Experiment::open(&dir)?.status().map(|s| print_json(&s)),
        Command::Metrics {
            labels,
            predictions,
            rho,
            folds,
        } => metrics_report(&labels, &predictions, rho, folds).map(|r| print_json(&r)),
        Command::Serve { dir, port } => {
            let rt = tokio::runtime::Runtime::new().map_err(|e| PipelineError::io(&dir, e))?;
            rt.block_on(feeler::service::serve(&dir, port)).map_err(|e| PipelineError::io(&dir, e))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
