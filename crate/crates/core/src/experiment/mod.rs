//! The end-to-end experiment: data, zoo table, optional elimination,
//! training, strategy comparison and reports.

mod compare;
mod config;
mod pipeline;
mod report;

pub use compare::{
    baseline_rows, choice_row, compare_scored, compare_strategies, evaluate_strategy, hits_best, portfolio_baseline,
    portfolio_row, run_sweep, score_rows, single_best, sweep_grid, write_sweep_csv, Comparison, ScoredRows,
    SweepPoint, PORTFOLIO_CAP,
};
pub use config::{load_zoo, DatasetSpec, ExperimentConfig, PairSpec, ReportSpec, Timing, ZooSpec, DATA_DIR_ENV};
pub use pipeline::{
    embed_solvers, eliminate_stage, evaluate_seed, gen_data, load_model, run_pipeline, run_zoo, train_seed, Datasets,
    PipelineSummary, SeedRun,
};
pub use report::{aggregate, emit_report, read_report_csv, read_report_json, report_csv, sample_std, ReportRow, REPORT_CSV_HEADER};

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::embed::EmbedError;
use crate::encoder::checkpoint::CheckpointError;
use crate::instance::InstanceError;
use crate::model::{ModelError, TrainError};
use crate::strategy::StrategyError;
use crate::zoo::ZooError;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Config(String),
    #[error("contract: {0}")]
    Contract(String),
    #[error("parameter: {0}")]
    Param(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("stage `{stage}` failed: {source} (artifacts: {})", artifacts.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "))]
    Stage {
        stage: &'static str,
        artifacts: Vec<PathBuf>,
        #[source]
        source: Box<ExperimentError>,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Zoo(#[from] ZooError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

impl ExperimentError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.display().to_string(), source }
    }
}
