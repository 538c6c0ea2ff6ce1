use std::path::PathBuf;

use super::config::ExperimentConfig;
use super::{write_json, ExperimentError};
use crate::data_io::{load_deep_features, load_manifest, write_file};
use crate::extractors::{
    load_categories, load_detections, load_io_map, run_extraction, ClientConfig, ExtractionOutcome,
    ExtractionSources, ImageRefs, SafeSearchClient, SceneSource,
};
use crate::feature_model::PLACES_SOURCE_TAG;

/// Command-line values that take precedence over the config.
#[derive(Debug, Clone, Default)]
pub struct ExtractOverrides {
    pub manifest: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct ExtractSummary {
    pub outcome: ExtractionOutcome,
    pub output_path: PathBuf,
    pub report_path: PathBuf,
}

impl ExtractSummary {
    pub fn is_partial(&self) -> bool {
        !self.outcome.is_complete()
    }
}

fn build_sources(cfg: &ExperimentConfig) -> Result<ExtractionSources, ExperimentError> {
    let e = &cfg.extract;
    let mut sources = ExtractionSources {
        image_refs: ImageRefs {
            template: e.image_ref_template.clone(),
        },
        confidence_threshold: e.confidence_threshold,
        ..Default::default()
    };
    if let Some(p) = &e.detections {
        sources.detections = Some(load_detections(p)?);
    }
    if let (Some(probs), Some(cats), Some(io)) = (&e.scene_probs, &e.scene_categories, &e.scene_io_map) {
        let store = load_deep_features(probs)?;
        if store.source_tag != PLACES_SOURCE_TAG {
            log::warn!(
                "{}: scene store tagged '{}' rather than '{PLACES_SOURCE_TAG}'",
                probs.display(),
                store.source_tag
            );
        }
        let categories = load_categories(cats)?;
        if categories.len() != store.dim {
            return Err(ExperimentError::Config(format!(
                "{} lists {} categories but the scene store has dim {}",
                cats.display(),
                categories.len(),
                store.dim
            )));
        }
        sources.scenes = Some(SceneSource {
            store,
            categories,
            io_map: load_io_map(io)?,
        });
    }
    let client_cfg = match &e.safe_search {
        Some(section) => section.client_config(),
        None => ClientConfig::from_env(),
    };
    sources.safe_search = client_cfg.map(SafeSearchClient::new);
    Ok(sources)
}

/// Extracts privacy features for every manifest image.
///
/// Writes the feature CSV (default `<out_dir>/privacy_features.csv`) and
/// `<out_dir>/extraction_report.json`. Per-image failures leave the batch
/// running; check [`ExtractSummary::is_partial`].
pub fn cmd_extract(
    cfg: &ExperimentConfig,
    overrides: &ExtractOverrides,
    workers: usize,
) -> Result<ExtractSummary, ExperimentError> {
    let manifest = overrides
        .manifest
        .clone()
        .or_else(|| cfg.data.manifest.clone())
        .ok_or_else(|| ExperimentError::Usage("extract needs --manifest or data.manifest".into()))?;
    if !manifest.is_file() {
        return Err(ExperimentError::Usage(format!(
            "manifest not found: {}",
            manifest.display()
        )));
    }
    cfg.validate_for_extraction()?;
    let sources = build_sources(cfg)?;
    if sources.is_empty() {
        return Err(ExperimentError::Config(
            "no extraction source configured (safe_search, detections or scenes)".into(),
        ));
    }
    let records = load_manifest(&manifest)?;
    let cache_dir = cfg
        .extract
        .cache_dir
        .clone()
        .unwrap_or_else(|| cfg.out_dir.join("safesearch_cache"));
    let outcome = run_extraction(&records, &sources, &cache_dir, workers)?;

    let output_path = overrides
        .output
        .clone()
        .or_else(|| cfg.extract.output.clone())
        .unwrap_or_else(|| cfg.out_dir.join("privacy_features.csv"));
    write_file(&output_path, outcome.to_csv())?;
    let report_path = cfg.out_dir.join("extraction_report.json");
    write_json(&report_path, &outcome.report)?;
    Ok(ExtractSummary {
        outcome,
        output_path,
        report_path,
    })
}
