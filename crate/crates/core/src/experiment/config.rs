use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::analysis::GroupThresholds;
use crate::classifiers::{TrainConfig, DEEP_HIDDEN_DIMS, PRIVACY_HIDDEN_DIMS};
use crate::data_io::Split;
use crate::extractors::{ClientConfig, DEFAULT_CONFIDENCE_THRESHOLD, KEY_ENV, URL_ENV};
use crate::feature_model::{FeatureGroup, FeatureGroups};

/// Offsets added to the top-level seed for each randomized component.
pub const SPLIT_SEED_OFFSET: u64 = 1;
pub const TRAIN_SEED_OFFSET: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub top_level: u64,
    pub split: u64,
    pub train: u64,
}

impl Seeds {
    pub fn derive(seed: u64) -> Self {
        Seeds {
            top_level: seed,
            split: seed.wrapping_add(SPLIT_SEED_OFFSET),
            train: seed.wrapping_add(TRAIN_SEED_OFFSET),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    pub manifest: Option<PathBuf>,
    pub privacy_features: Option<PathBuf>,
    /// Deep feature stores; each file declares its own source tag.
    pub deep_features: Vec<PathBuf>,
    pub annotations: Option<PathBuf>,
    /// (train, val, test) fractions used when the manifest has no splits.
    pub split_fractions: [f64; 3],
}

impl Default for DataPaths {
    fn default() -> Self {
        DataPaths {
            manifest: None,
            privacy_features: None,
            deep_features: Vec::new(),
            annotations: None,
            split_fractions: [0.7, 0.1, 0.2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSelection {
    pub groups: FeatureGroups,
    pub deep_source_tag: Option<String>,
}

impl Default for FeatureSelection {
    fn default() -> Self {
        FeatureSelection {
            groups: FeatureGroups::PRIVACY,
            deep_source_tag: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[default]
    Logreg,
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// MLP only. Defaults depend on whether deep features are used.
    pub hidden_dims: Option<Vec<usize>>,
    pub threshold: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kind: ModelKind::Logreg,
            hidden_dims: None,
            threshold: 0.5,
        }
    }
}

impl ModelConfig {
    pub fn hidden_dims_for(&self, groups: FeatureGroups) -> Vec<usize> {
        match &self.hidden_dims {
            Some(h) => h.clone(),
            None if groups.contains(FeatureGroup::Deep) || groups.contains(FeatureGroup::Places) => {
                DEEP_HIDDEN_DIMS.to_vec()
            }
            None => PRIVACY_HIDDEN_DIMS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub split: Split,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig { split: Split::Test }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SafeSearchSection {
    /// Falls back to the `PRIVLENS_SAFESEARCH_URL` environment variable.
    pub endpoint: Option<String>,
    pub requests_per_second: f64,
    pub max_attempts: u32,
    pub backoff_base_ms: u64,
    pub backoff_max_ms: u64,
    pub timeout_ms: u64,
}

impl Default for SafeSearchSection {
    fn default() -> Self {
        let d = ClientConfig::new("");
        SafeSearchSection {
            endpoint: None,
            requests_per_second: d.requests_per_second,
            max_attempts: d.max_attempts,
            backoff_base_ms: d.backoff_base.as_millis() as u64,
            backoff_max_ms: d.backoff_max.as_millis() as u64,
            timeout_ms: d.timeout.as_millis() as u64,
        }
    }
}

impl SafeSearchSection {
    /// Client settings; the API key always comes from the environment.
    pub fn client_config(&self) -> Option<ClientConfig> {
        let endpoint = self
            .endpoint
            .clone()
            .or_else(|| std::env::var(URL_ENV).ok())
            .filter(|s| !s.is_empty())?;
        let mut c = ClientConfig::new(endpoint);
        c.api_key = std::env::var(KEY_ENV).ok().filter(|s| !s.is_empty());
        c.requests_per_second = self.requests_per_second;
        c.max_attempts = self.max_attempts;
        c.backoff_base = Duration::from_millis(self.backoff_base_ms);
        c.backoff_max = Duration::from_millis(self.backoff_max_ms);
        c.timeout = Duration::from_millis(self.timeout_ms);
        Some(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractConfig {
    /// Defaults to `<out_dir>/privacy_features.csv`.
    pub output: Option<PathBuf>,
    /// Defaults to `<out_dir>/safesearch_cache`.
    pub cache_dir: Option<PathBuf>,
    pub image_ref_template: String,
    pub detections: Option<PathBuf>,
    pub confidence_threshold: f64,
    /// Deep store of scene probabilities (tag `places365`).
    pub scene_probs: Option<PathBuf>,
    pub scene_categories: Option<PathBuf>,
    pub scene_io_map: Option<PathBuf>,
    pub safe_search: Option<SafeSearchSection>,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig {
            output: None,
            cache_dir: None,
            image_ref_template: "{image_id}".into(),
            detections: None,
            confidence_threshold: DEFAULT_CONFIDENCE_THRESHOLD,
            scene_probs: None,
            scene_categories: None,
            scene_io_map: None,
            safe_search: None,
        }
    }
}

/// One ablation row: a feature-group selection under a unique id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationRow {
    pub id: String,
    pub groups: FeatureGroups,
    #[serde(default)]
    pub deep_source_tag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub data: DataPaths,
    pub features: FeatureSelection,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub evaluate: EvaluateConfig,
    pub extract: ExtractConfig,
    pub analysis: GroupThresholds,
    pub ablation: Vec<AblationRow>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            out_dir: PathBuf::from("out"),
            data: DataPaths::default(),
            features: FeatureSelection::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            evaluate: EvaluateConfig::default(),
            extract: ExtractConfig::default(),
            analysis: GroupThresholds::default(),
            ablation: Vec::new(),
        }
    }
}

fn rebase(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

fn rebase_opt(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(p) = p {
        rebase(base, p);
    }
}

fn require_file(what: &str, path: &Path) -> Result<(), ExperimentError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(ExperimentError::Config(format!(
            "{what}: file not found: {}",
            path.display()
        )))
    }
}

impl ExperimentConfig {
    /// Parses TOML text; relative paths stay relative.
    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))
    }

    /// Reads a config file and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            ExperimentError::Usage(format!("cannot read config {}: {e}", path.display()))
        })?;
        let mut cfg = Self::from_toml(&text)
            .map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.rebase_paths(base);
        Ok(cfg)
    }

    pub fn rebase_paths(&mut self, base: &Path) {
        rebase(base, &mut self.out_dir);
        let d = &mut self.data;
        rebase_opt(base, &mut d.manifest);
        rebase_opt(base, &mut d.privacy_features);
        rebase_opt(base, &mut d.annotations);
        for p in &mut d.deep_features {
            rebase(base, p);
        }
        let e = &mut self.extract;
        rebase_opt(base, &mut e.output);
        rebase_opt(base, &mut e.cache_dir);
        rebase_opt(base, &mut e.detections);
        rebase_opt(base, &mut e.scene_probs);
        rebase_opt(base, &mut e.scene_categories);
        rebase_opt(base, &mut e.scene_io_map);
    }

    pub fn seeds(&self) -> Seeds {
        Seeds::derive(self.seed)
    }

    /// Training settings with the derived training seed filled in.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seeds().train,
            ..self.train.clone()
        }
    }

    fn validate_data_files(&self) -> Result<(), ExperimentError> {
        let d = &self.data;
        let manifest = d
            .manifest
            .as_deref()
            .ok_or_else(|| ExperimentError::Config("data.manifest is required".into()))?;
        require_file("data.manifest", manifest)?;
        if let Some(p) = &d.privacy_features {
            require_file("data.privacy_features", p)?;
        }
        if let Some(p) = &d.annotations {
            require_file("data.annotations", p)?;
        }
        for p in &d.deep_features {
            require_file("data.deep_features", p)?;
        }
        let f = d.split_fractions;
        if f.iter().any(|v| !v.is_finite() || *v < 0.0) || f.iter().sum::<f64>() <= 0.0 {
            return Err(ExperimentError::Config(
                "data.split_fractions must be non-negative with a positive sum".into(),
            ));
        }
        Ok(())
    }

    fn validate_model(&self) -> Result<(), ExperimentError> {
        self.train
            .validate()
            .map_err(|e| ExperimentError::Config(e.to_string()))?;
        if self.train.seed != 0 {
            return Err(ExperimentError::Config(
                "train.seed is derived from the top-level seed; set `seed` instead".into(),
            ));
        }
        let t = self.model.threshold;
        if !(t > 0.0 && t < 1.0) {
            return Err(ExperimentError::Config(format!(
                "model.threshold {t} must lie in (0, 1)"
            )));
        }
        if let Some(h) = &self.model.hidden_dims {
            if h.len() != 3 || h.contains(&0) {
                return Err(ExperimentError::Config(
                    "model.hidden_dims must list three positive widths".into(),
                ));
            }
        }
        Ok(())
    }

    fn validate_groups(groups: FeatureGroups, tag: Option<&str>, what: &str) -> Result<(), ExperimentError> {
        if groups.is_empty() {
            return Err(ExperimentError::Config(format!(
                "{what}: select at least one of Sens, People, Out, Places, Deep"
            )));
        }
        if groups.contains(FeatureGroup::Deep) && tag.is_none() {
            return Err(ExperimentError::Config(format!(
                "{what}: the Deep group needs a deep_source_tag"
            )));
        }
        Ok(())
    }

    /// Checks everything `train` and `evaluate` rely on before any work starts.
    pub fn validate_for_training(&self) -> Result<(), ExperimentError> {
        self.validate_data_files()?;
        self.validate_model()?;
        Self::validate_groups(
            self.features.groups,
            self.features.deep_source_tag.as_deref(),
            "features",
        )
    }

    pub fn validate_for_evaluation(&self) -> Result<(), ExperimentError> {
        self.validate_data_files()?;
        let t = self.model.threshold;
        if !(t > 0.0 && t < 1.0) {
            return Err(ExperimentError::Config(format!(
                "model.threshold {t} must lie in (0, 1)"
            )));
        }
        Ok(())
    }

    pub fn validate_for_ablation(&self) -> Result<(), ExperimentError> {
        self.validate_data_files()?;
        self.validate_model()?;
        if self.ablation.is_empty() {
            return Err(ExperimentError::Config("no [[ablation]] rows configured".into()));
        }
        let mut seen = HashSet::new();
        for row in &self.ablation {
            if !seen.insert(row.id.as_str()) {
                return Err(ExperimentError::Config(format!(
                    "duplicate ablation row id '{}'",
                    row.id
                )));
            }
            let tag = row
                .deep_source_tag
                .as_deref()
                .or(self.features.deep_source_tag.as_deref());
            Self::validate_groups(row.groups, tag, &format!("ablation row '{}'", row.id))?;
        }
        Ok(())
    }

    pub fn validate_for_analysis(&self) -> Result<(), ExperimentError> {
        self.validate_data_files()?;
        if self.data.annotations.is_none() && self.data.privacy_features.is_none() {
            return Err(ExperimentError::Config(
                "analysis needs data.annotations and/or data.privacy_features".into(),
            ));
        }
        Ok(())
    }

    pub fn validate_for_extraction(&self) -> Result<(), ExperimentError> {
        let e = &self.extract;
        for (what, p) in [
            ("extract.detections", &e.detections),
            ("extract.scene_probs", &e.scene_probs),
            ("extract.scene_categories", &e.scene_categories),
            ("extract.scene_io_map", &e.scene_io_map),
        ] {
            if let Some(p) = p {
                require_file(what, p)?;
            }
        }
        let scene_parts = [&e.scene_probs, &e.scene_categories, &e.scene_io_map];
        let n_scene = scene_parts.iter().filter(|p| p.is_some()).count();
        if n_scene != 0 && n_scene != 3 {
            return Err(ExperimentError::Config(
                "extract.scene_probs, scene_categories and scene_io_map must be set together".into(),
            ));
        }
        if !(0.0..=1.0).contains(&e.confidence_threshold) {
            return Err(ExperimentError::Config(
                "extract.confidence_threshold must lie in [0, 1]".into(),
            ));
        }
        if let Some(s) = &e.safe_search {
            if s.client_config().is_none() {
                return Err(ExperimentError::Config(format!(
                    "extract.safe_search needs an endpoint or {URL_ENV}"
                )));
            }
            if !(s.requests_per_second > 0.0) || s.max_attempts == 0 {
                return Err(ExperimentError::Config(
                    "extract.safe_search needs positive requests_per_second and max_attempts".into(),
                ));
            }
        }
        Ok(())
    }
}
