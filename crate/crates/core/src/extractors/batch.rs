use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::people::{people_features, Detection};
use super::safesearch::{SafeSearchClient, SafeSearchResult};
use super::scene::{outdoor_probability, IoMap, SceneDistribution};
use super::ExtractError;
use crate::data_io::{DeepStore, ImageRecord};
use crate::feature_model::PrivacyFeatureVector;

/// Maps image ids to the reference sent to the annotation service.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRefs {
    /// `{image_id}` is replaced by the id.
    pub template: String,
}

impl Default for ImageRefs {
    fn default() -> Self {
        ImageRefs {
            template: "{image_id}".into(),
        }
    }
}

impl ImageRefs {
    pub fn resolve(&self, image_id: &str) -> String {
        self.template.replace("{image_id}", image_id)
    }
}

/// Scene probabilities per image with the category names and indoor/outdoor map.
#[derive(Debug, Clone)]
pub struct SceneSource {
    pub store: DeepStore,
    pub categories: Vec<String>,
    pub io_map: IoMap,
}

#[derive(Default)]
pub struct ExtractionSources {
    pub safe_search: Option<SafeSearchClient>,
    pub image_refs: ImageRefs,
    pub detections: Option<BTreeMap<String, Vec<Detection>>>,
    pub confidence_threshold: f64,
    pub scenes: Option<SceneSource>,
}

impl ExtractionSources {
    pub fn is_empty(&self) -> bool {
        self.safe_search.is_none() && self.detections.is_none() && self.scenes.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageFailure {
    pub image_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionReport {
    pub n_images: usize,
    pub n_rows: usize,
    /// Rows with at least one missing sensitivity value.
    pub n_imputed: usize,
    /// Sources that were not configured; their fields are written as zero.
    pub unconfigured_sources: Vec<String>,
    pub failures: Vec<ImageFailure>,
}

#[derive(Debug, Clone)]
pub struct ExtractionOutcome {
    /// Successful rows in manifest order.
    pub rows: Vec<(String, PrivacyFeatureVector)>,
    pub report: ExtractionReport,
    pub cache_hits: usize,
}

impl ExtractionOutcome {
    pub fn is_complete(&self) -> bool {
        self.report.failures.is_empty()
    }

    pub fn to_csv(&self) -> String {
        crate::data_io::privacy_features_csv(self.rows.iter().map(|(id, v)| (id.as_str(), v)))
    }
}

/// Cache file for an image id; bytes outside `[A-Za-z0-9._-]` are percent-encoded.
pub fn cache_path(cache_dir: &Path, image_id: &str) -> PathBuf {
    let mut name = String::with_capacity(image_id.len() + 5);
    for b in image_id.bytes() {
        if b.is_ascii_alphanumeric() || b == b'-' || b == b'_' || (b == b'.' && !name.is_empty()) {
            name.push(b as char);
        } else {
            let _ = write!(name, "%{b:02X}");
        }
    }
    name.push_str(".json");
    cache_dir.join(name)
}

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    image_id: String,
    safe_search: SafeSearchResult,
}

fn read_cache(path: &Path, image_id: &str) -> Option<SafeSearchResult> {
    let text = std::fs::read_to_string(path).ok()?;
    let entry: CacheEntry = serde_json::from_str(&text).ok()?;
    (entry.image_id == image_id).then_some(entry.safe_search)
}

fn write_cache(path: &Path, image_id: &str, result: &SafeSearchResult) -> Result<(), ExtractError> {
    let entry = CacheEntry {
        image_id: image_id.to_string(),
        safe_search: *result,
    };
    let text = serde_json::to_string_pretty(&entry).map_err(|e| ExtractError::Cache(e.to_string()))?;
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, text).map_err(|e| ExtractError::Cache(format!("{}: {e}", tmp.display())))?;
    std::fs::rename(&tmp, path).map_err(|e| ExtractError::Cache(format!("{}: {e}", path.display())))
}

struct ImageResult {
    features: Result<PrivacyFeatureVector, ExtractError>,
    cache_hit: bool,
}

fn extract_one(image_id: &str, sources: &ExtractionSources, cache_dir: &Path) -> ImageResult {
    let mut cache_hit = false;
    let features = (|| {
        let mut v = PrivacyFeatureVector {
            adult: None,
            racy: None,
            medical: None,
            spoofed: None,
            violent: None,
            people_prob: 0.0,
            people_count: 0,
            outdoor_prob: 0.0,
        };

        if let Some(scenes) = &sources.scenes {
            let row = scenes
                .store
                .vectors
                .get(image_id)
                .ok_or(ExtractError::MissingSource("scene distribution"))?;
            let dist = SceneDistribution::new(row.values.clone(), scenes.categories.clone())?;
            v.outdoor_prob = outdoor_probability(&dist, &scenes.io_map)?;
        }

        if let Some(dets) = &sources.detections {
            let p = people_features(
                dets.get(image_id).map_or(&[][..], Vec::as_slice),
                sources.confidence_threshold,
            );
            v.people_count = p.people_count;
            v.people_prob = p.people_prob;
        }

        if let Some(client) = &sources.safe_search {
            let path = cache_path(cache_dir, image_id);
            let result = match read_cache(&path, image_id) {
                Some(r) => {
                    cache_hit = true;
                    r
                }
                None => {
                    let r = client.annotate(&sources.image_refs.resolve(image_id))?;
                    write_cache(&path, image_id, &r)?;
                    r
                }
            };
            result.apply_to(&mut v);
        }
        Ok(v)
    })();
    ImageResult {
        features,
        cache_hit,
    }
}

/// Extracts one feature row per manifest image on `workers` threads.
///
/// Annotation-service results are cached as one JSON file per image under
/// `cache_dir` and reused on later runs. Per-image failures are collected in
/// the report and never abort the batch.
pub fn run_extraction(
    manifest: &[ImageRecord],
    sources: &ExtractionSources,
    cache_dir: &Path,
    workers: usize,
) -> Result<ExtractionOutcome, ExtractError> {
    std::fs::create_dir_all(cache_dir)
        .map_err(|e| ExtractError::Cache(format!("{}: {e}", cache_dir.display())))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| ExtractError::Cache(e.to_string()))?;
    let results: Vec<ImageResult> = pool.install(|| {
        manifest
            .par_iter()
            .map(|r| extract_one(&r.image_id, sources, cache_dir))
            .collect()
    });

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut cache_hits = 0;
    for (record, result) in manifest.iter().zip(results) {
        cache_hits += result.cache_hit as usize;
        match result.features {
            Ok(v) => rows.push((record.image_id.clone(), v)),
            Err(e) => {
                log::warn!("extraction failed for {}: {e}", record.image_id);
                failures.push(ImageFailure {
                    image_id: record.image_id.clone(),
                    error: e.to_string(),
                });
            }
        }
    }
    let mut unconfigured = Vec::new();
    if sources.safe_search.is_none() {
        unconfigured.push("safe_search".to_string());
    }
    if sources.detections.is_none() {
        unconfigured.push("detections".to_string());
    }
    if sources.scenes.is_none() {
        unconfigured.push("scenes".to_string());
    }
    let report = ExtractionReport {
        n_images: manifest.len(),
        n_rows: rows.len(),
        n_imputed: rows.iter().filter(|(_, v)| v.is_imputed()).count(),
        unconfigured_sources: unconfigured,
        failures,
    };
    Ok(ExtractionOutcome {
        rows,
        report,
        cache_hits,
    })
}
