//! Config-driven commands: extract, train, evaluate, ablate, analyze.
//!
//! Every command is a function of its input files, the config and the seed.
//! Outputs carry no timestamps, so reruns produce identical bytes.

mod ablation;
mod analyze;
mod config;
mod extract;
mod train;

use std::path::PathBuf;

use thiserror::Error;

use crate::analysis::AnalysisError;
use crate::classifiers::ClassifierError;
use crate::data_io::DataError;
use crate::extractors::ExtractError;
use crate::metrics::MetricsError;

pub use ablation::{
    ablation_csv, ablation_text, cmd_ablate, table1_layout, AblationOutcome, AblationResult,
};
pub use analyze::{cmd_analyze, AnalysisSummary};
pub use config::{
    AblationRow, DataPaths, EvaluateConfig, ExperimentConfig, ExtractConfig, FeatureSelection,
    ModelConfig, ModelKind, SafeSearchSection, Seeds, SPLIT_SEED_OFFSET, TRAIN_SEED_OFFSET,
};
pub use extract::{cmd_extract, ExtractOverrides, ExtractSummary};
pub use train::{cmd_evaluate, cmd_train, load_dataset, EvaluateSummary, TrainSummary};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const INTERNAL: i32 = 1;
    pub const PARTIAL: i32 = 2;
    pub const USAGE: i32 = 64;
    pub const CONFIG: i32 = 78;
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("feature spec mismatch: {0}")]
    FeatureSpecMismatch(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ExperimentError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Usage(_) => exit::USAGE,
            ExperimentError::Config(_) | ExperimentError::FeatureSpecMismatch(_) => exit::CONFIG,
            _ => exit::INTERNAL,
        }
    }
}

fn write_json<T: serde::Serialize>(path: &std::path::Path, value: &T) -> Result<(), ExperimentError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| ExperimentError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    })?;
    text.push('\n');
    crate::data_io::write_file(path, text)?;
    Ok(())
}
