use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ModelKind, Seeds};
use super::{write_json, ExperimentError};
use crate::classifiers::{
    load_model, save_model, train_logreg, train_mlp, Classifier, EpochLoss, TrainConfig, Validation,
};
use crate::data_io::{
    assign_random_splits, load_annotations, load_deep_features, load_manifest,
    load_privacy_features, write_manifest, DataError, Dataset, DesignMatrix, Split,
};
use crate::feature_model::{FeatureGroups, FeatureSpec};
use crate::metrics::MetricsReport;

pub const SPLIT_MANIFEST_FILE: &str = "manifest_with_splits.csv";

/// Loads the configured dataset.
///
/// Records without a split get a seeded random one, and the completed
/// manifest is written to the output directory. With `labeled_only`,
/// unlabeled records and their feature rows are dropped.
pub fn load_dataset(
    cfg: &ExperimentConfig,
    labeled_only: bool,
    with_annotations: bool,
) -> Result<Dataset, ExperimentError> {
    let manifest = cfg
        .data
        .manifest
        .as_deref()
        .ok_or_else(|| ExperimentError::Config("data.manifest is required".into()))?;
    let mut records = load_manifest(manifest)?;
    if records.iter().any(|r| r.split.is_none()) {
        let [tr, va, te] = cfg.data.split_fractions;
        assign_random_splits(&mut records, (tr, va, te), cfg.seeds().split);
        let path = cfg.out_dir.join(SPLIT_MANIFEST_FILE);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| DataError::io(parent, e))?;
        }
        write_manifest(&path, &records)?;
        log::info!("assigned random splits; wrote {}", path.display());
    }

    let mut dropped = HashSet::new();
    if labeled_only {
        records.retain(|r| {
            if r.label.is_none() {
                dropped.insert(r.image_id.clone());
            }
            r.label.is_some()
        });
        if !dropped.is_empty() {
            log::warn!("{} unlabeled images excluded", dropped.len());
        }
    }

    let mut ds = Dataset::new(records);
    if let Some(p) = &cfg.data.privacy_features {
        let mut store = load_privacy_features(p)?;
        store.retain(|id, _| !dropped.contains(id));
        ds = ds.with_privacy_features(store);
    }
    for p in &cfg.data.deep_features {
        let mut store = load_deep_features(p)?;
        if ds.deep_features.contains_key(&store.source_tag) {
            return Err(ExperimentError::Config(format!(
                "two deep stores share the source tag '{}'",
                store.source_tag
            )));
        }
        store.vectors.retain(|id, _| !dropped.contains(id));
        store.order.retain(|id| !dropped.contains(id));
        ds = ds.with_deep_store(store);
    }
    if with_annotations {
        if let Some(p) = &cfg.data.annotations {
            ds = ds.with_annotations(load_annotations(p)?);
        }
    }
    Ok(ds)
}

/// Resolves block sizes; unsatisfiable selections are configuration errors.
pub(crate) fn resolve_spec(
    ds: &Dataset,
    groups: FeatureGroups,
    deep_source_tag: Option<&str>,
) -> Result<FeatureSpec, ExperimentError> {
    if groups.needs_privacy() && ds.privacy_features.is_empty() {
        return Err(ExperimentError::Config(format!(
            "groups {groups} need data.privacy_features"
        )));
    }
    ds.resolve_spec(groups, deep_source_tag).map_err(|e| match e {
        DataError::MissingStore(_) | DataError::MissingSourceTag | DataError::Feature(_) => {
            ExperimentError::Config(format!("groups {groups}: {e}"))
        }
        other => other.into(),
    })
}

fn predict_metrics(
    model: &Classifier,
    m: &DesignMatrix,
    threshold: f64,
) -> Result<MetricsReport, ExperimentError> {
    let pred = model.predict_label(&m.x, threshold)?;
    Ok(MetricsReport::evaluate(&m.labels(), &pred)?)
}

/// Metrics of `model` on one split. The dataset must supply every block
/// named in the model's feature spec.
pub(crate) fn evaluate_split(
    ds: &Dataset,
    model: &Classifier,
    split: Split,
    threshold: f64,
) -> Result<MetricsReport, ExperimentError> {
    let spec = model
        .feature_spec()
        .ok_or_else(|| ExperimentError::FeatureSpecMismatch("model carries no feature spec".into()))?;
    let mismatch = |e: DataError| ExperimentError::FeatureSpecMismatch(format!("{}: {e}", spec.groups));
    if spec.groups.needs_privacy() && ds.privacy_features.is_empty() {
        return Err(mismatch(DataError::MissingStore("privacy features".into())));
    }
    ds.check_spec(spec).map_err(mismatch)?;
    let m = ds.build_design_matrix(Some(split), spec).map_err(|e| match e {
        DataError::MissingFeatures { .. } | DataError::DimensionMismatch { .. } => mismatch(e),
        other => other.into(),
    })?;
    predict_metrics(model, &m, threshold)
}

pub(crate) struct Fitted {
    pub model: Classifier,
    pub trace: Vec<EpochLoss>,
    pub train_config: TrainConfig,
    pub n_train: usize,
    pub n_val: usize,
    pub val_metrics: Option<MetricsReport>,
}

/// Trains on the train split; the val split (when present) is traced and
/// scored.
pub(crate) fn fit(
    ds: &Dataset,
    cfg: &ExperimentConfig,
    groups: FeatureGroups,
    deep_source_tag: Option<&str>,
) -> Result<Fitted, ExperimentError> {
    let spec = resolve_spec(ds, groups, deep_source_tag)?;
    let train = ds.build_design_matrix(Some(Split::Train), &spec)?;
    let val = match ds.build_design_matrix(Some(Split::Val), &spec) {
        Ok(m) => Some(m),
        Err(DataError::EmptySelection) => {
            log::warn!("validation split is empty; no validation metrics");
            None
        }
        Err(e) => return Err(e.into()),
    };
    let tc = cfg.train_config();
    let validation = val.as_ref().map(|m| Validation { x: &m.x, y: &m.y });
    let (mut model, trace) = match cfg.model.kind {
        ModelKind::Logreg => {
            let t = train_logreg(&train.x, &train.y, &tc, validation)?;
            (Classifier::from(t.model), t.trace)
        }
        ModelKind::Mlp => {
            let hidden = cfg.model.hidden_dims_for(groups);
            let t = train_mlp(&train.x, &train.y, &tc, &hidden, validation)?;
            (Classifier::from(t.model), t.trace)
        }
    };
    model.set_feature_spec(spec);
    let val_metrics = val
        .as_ref()
        .map(|m| predict_metrics(&model, m, cfg.model.threshold))
        .transpose()?;
    Ok(Fitted {
        model,
        trace,
        train_config: tc,
        n_train: train.ids.len(),
        n_val: val.map_or(0, |m| m.ids.len()),
        val_metrics,
    })
}

/// Metrics labeled with the split they were computed on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub split: Split,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, Serialize)]
struct TrainLog<'a> {
    seeds: Seeds,
    model_kind: &'static str,
    feature_groups: FeatureGroups,
    deep_source_tag: Option<&'a str>,
    feature_dim: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    hidden_dims: Option<Vec<usize>>,
    train_config: &'a TrainConfig,
    n_train: usize,
    n_val: usize,
    epochs_run: usize,
    final_train_loss: Option<f64>,
    final_val_loss: Option<f64>,
    dataset_warnings: &'a [String],
}

fn loss_trace_csv(trace: &[EpochLoss]) -> String {
    let mut s = String::from("epoch,train_loss,val_loss\n");
    for e in trace {
        let val = e.val_loss.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{},{}", e.epoch, e.train_loss, val);
    }
    s
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub model_path: PathBuf,
    pub model: Classifier,
    pub val_metrics: Option<MetricsReport>,
    pub epochs_run: usize,
    pub seeds: Seeds,
}

/// Trains the configured model and writes `model.json`, `loss_trace.csv`,
/// `train_log.json` and (when a val split exists) `val_metrics.json`.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<TrainSummary, ExperimentError> {
    cfg.validate_for_training()?;
    let ds = load_dataset(cfg, true, false)?;
    let groups = cfg.features.groups;
    let tag = cfg.features.deep_source_tag.as_deref();
    let fitted = fit(&ds, cfg, groups, tag)?;

    let out = &cfg.out_dir;
    let model_path = out.join("model.json");
    std::fs::create_dir_all(out).map_err(|e| DataError::io(out, e))?;
    save_model(&fitted.model, &model_path)?;
    crate::data_io::write_file(&out.join("loss_trace.csv"), loss_trace_csv(&fitted.trace))?;

    let log = TrainLog {
        seeds: cfg.seeds(),
        model_kind: fitted.model.kind(),
        feature_groups: groups,
        deep_source_tag: tag,
        feature_dim: fitted.model.input_dim(),
        hidden_dims: match &fitted.model {
            Classifier::Mlp(m) => Some(m.hidden_dims()),
            Classifier::Logreg(_) => None,
        },
        train_config: &fitted.train_config,
        n_train: fitted.n_train,
        n_val: fitted.n_val,
        epochs_run: fitted.trace.len(),
        final_train_loss: fitted.trace.last().map(|e| e.train_loss),
        final_val_loss: fitted.trace.last().and_then(|e| e.val_loss),
        dataset_warnings: &ds.warnings,
    };
    write_json(&out.join("train_log.json"), &log)?;
    if let Some(m) = &fitted.val_metrics {
        write_json(
            &out.join("val_metrics.json"),
            &SplitMetrics {
                split: Split::Val,
                metrics: m.clone(),
            },
        )?;
    }
    Ok(TrainSummary {
        model_path,
        val_metrics: fitted.val_metrics,
        epochs_run: fitted.trace.len(),
        model: fitted.model,
        seeds: cfg.seeds(),
    })
}

#[derive(Debug, Clone)]
pub struct EvaluateSummary {
    pub split: Split,
    pub metrics: MetricsReport,
    pub metrics_path: PathBuf,
}

/// Scores a saved model on the configured split (test by default) and
/// writes `<split>_metrics.json`.
pub fn cmd_evaluate(cfg: &ExperimentConfig, model_path: &Path) -> Result<EvaluateSummary, ExperimentError> {
    if !model_path.is_file() {
        return Err(ExperimentError::Usage(format!(
            "model file not found: {}",
            model_path.display()
        )));
    }
    cfg.validate_for_evaluation()?;
    let model = load_model(model_path)?;
    let ds = load_dataset(cfg, true, false)?;
    let split = cfg.evaluate.split;
    let metrics = evaluate_split(&ds, &model, split, cfg.model.threshold)?;
    let metrics_path = cfg.out_dir.join(format!("{split}_metrics.json"));
    write_json(
        &metrics_path,
        &SplitMetrics {
            split,
            metrics: metrics.clone(),
        },
    )?;
    Ok(EvaluateSummary {
        split,
        metrics,
        metrics_path,
    })
}
