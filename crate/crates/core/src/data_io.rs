//! CSV manifests, feature stores and annotation files, joined into aligned
//! design matrices.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feature_model::{
    assemble_features, DeepFeatureVector, FeatureError, FeatureGroup, FeatureGroups,
    FeatureInputs, FeatureMatrix, FeatureSpec, LabelVector, Likelihood, PrivacyFeatureVector,
    PrivacyLabel, Sensitivity, SensitivityClass, PLACES_SOURCE_TAG,
};

pub const MANIFEST_HEADER: &str = "image_id,label,split";
pub const PRIVACY_HEADER: &str =
    "image_id,adult,racy,medical,spoofed,violent,people_prob,people_count,outdoor_prob";
pub const ANNOTATION_HEADER: &str = "image_id,assessor_id,vote";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("duplicate image id '{0}'")]
    DuplicateId(String),
    #[error("unknown label '{0}' (expected private, public or empty)")]
    UnknownLabel(String),
    #[error("unknown split '{0}' (expected train, val, test or empty)")]
    UnknownSplit(String),
    #[error("unknown vote '{0}'")]
    UnknownVote(String),
    #[error("image '{image_id}': expected {expected} deep values, found {found}")]
    DimensionMismatch {
        image_id: String,
        expected: usize,
        found: usize,
    },
    #[error("image '{image_id}' lacks features for group {group}")]
    MissingFeatures { image_id: String, group: FeatureGroup },
    #[error("image '{0}' has no binary label")]
    MissingLabel(String),
    #[error("no deep feature store with source tag '{0}' is loaded")]
    MissingStore(String),
    #[error("deep feature group selected without a source tag")]
    MissingSourceTag,
    #[error("no images selected for the requested split")]
    EmptySelection,
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

impl DataError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn parse(path: &Path, line: u64, message: impl Into<String>) -> Self {
        DataError::Parse {
            path: path.to_path_buf(),
            line,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "val" | "valid" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(DataError::UnknownSplit(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    pub label: Option<PrivacyLabel>,
    pub split: Option<Split>,
}

/// One assessor's selection on the five-class annotation scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FiveClassVote {
    ClearlyPrivate,
    Private,
    Undecidable,
    Public,
    ClearlyPublic,
}

impl FiveClassVote {
    pub const ALL: [FiveClassVote; 5] = [
        FiveClassVote::ClearlyPrivate,
        FiveClassVote::Private,
        FiveClassVote::Undecidable,
        FiveClassVote::Public,
        FiveClassVote::ClearlyPublic,
    ];

    pub fn token(self) -> &'static str {
        match self {
            FiveClassVote::ClearlyPrivate => "CLEARLY_PRIVATE",
            FiveClassVote::Private => "PRIVATE",
            FiveClassVote::Undecidable => "UNDECIDABLE",
            FiveClassVote::Public => "PUBLIC",
            FiveClassVote::ClearlyPublic => "CLEARLY_PUBLIC",
        }
    }

    /// Merges the "clearly" variants into their plain counterpart.
    pub fn folded(self) -> FiveClassVote {
        match self {
            FiveClassVote::ClearlyPrivate => FiveClassVote::Private,
            FiveClassVote::ClearlyPublic => FiveClassVote::Public,
            v => v,
        }
    }
}

impl FromStr for FiveClassVote {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().to_ascii_uppercase().replace(' ', "_");
        FiveClassVote::ALL
            .into_iter()
            .find(|v| v.token() == t)
            .ok_or_else(|| DataError::UnknownVote(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub image_id: String,
    pub votes: Vec<FiveClassVote>,
    /// Aligned with `votes` when present.
    pub assessor_ids: Option<Vec<String>>,
}

/// All deep vectors sharing one source tag.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepStore {
    pub source_tag: String,
    pub dim: usize,
    pub vectors: HashMap<String, DeepFeatureVector>,
    /// Image ids in file order.
    pub order: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StoreKind {
    Privacy,
    Deep,
}

#[derive(Debug, Clone)]
pub enum FeatureStore {
    Privacy(BTreeMap<String, PrivacyFeatureVector>),
    Deep(DeepStore),
}

fn open(path: &Path) -> Result<File, DataError> {
    File::open(path).map_err(|e| DataError::io(path, e))
}

fn csv_reader<R: Read>(rdr: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(false)
        .comment(None)
        .from_reader(rdr)
}

fn record_line(rec: &csv::StringRecord, offset: u64) -> u64 {
    rec.position().map_or(0, |p| p.line()) + offset
}

fn csv_error(path: &Path, err: csv::Error, offset: u64) -> DataError {
    let line = err.position().map_or(0, |p| p.line()) + offset;
    DataError::parse(path, line, err.to_string())
}

fn column_index(
    path: &Path,
    headers: &csv::StringRecord,
    name: &str,
    line: u64,
) -> Result<usize, DataError> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| DataError::parse(path, line, format!("missing column '{name}'")))
}

pub fn parse_label(token: &str) -> Result<Option<PrivacyLabel>, DataError> {
    match token.trim().to_ascii_lowercase().as_str() {
        "" => Ok(None),
        "private" => Ok(Some(PrivacyLabel::Private)),
        "public" => Ok(Some(PrivacyLabel::Public)),
        _ => Err(DataError::UnknownLabel(token.to_string())),
    }
}

/// Reads `image_id,label[,split]`. Duplicate ids are rejected.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<ImageRecord>, DataError> {
    let path = path.as_ref();
    let mut rdr = csv_reader(open(path)?);
    let headers = rdr.headers().map_err(|e| csv_error(path, e, 0))?.clone();
    let id_col = column_index(path, &headers, "image_id", 1)?;
    let label_col = column_index(path, &headers, "label", 1)?;
    let split_col = headers.iter().position(|h| h == "split");

    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e, 0))?;
        let line = record_line(&rec, 0);
        let image_id = rec[id_col].to_string();
        if image_id.is_empty() {
            return Err(DataError::parse(path, line, "empty image_id"));
        }
        if !seen.insert(image_id.clone()) {
            return Err(DataError::DuplicateId(image_id));
        }
        let label = parse_label(&rec[label_col])?;
        let split = match split_col.map(|c| rec[c].trim()) {
            None | Some("") => None,
            Some(s) => Some(s.parse()?),
        };
        records.push(ImageRecord {
            image_id,
            label,
            split,
        });
    }
    Ok(records)
}

pub fn write_manifest(path: impl AsRef<Path>, records: &[ImageRecord]) -> Result<(), DataError> {
    let path = path.as_ref();
    let mut out = String::from(MANIFEST_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{}\n",
            r.image_id,
            r.label.map(|l| l.to_string()).unwrap_or_default(),
            r.split.map(|s| s.as_str()).unwrap_or("")
        ));
    }
    std::fs::write(path, out).map_err(|e| DataError::io(path, e))
}

/// Assigns a seeded random split to every record that has none.
/// Fractions are (train, val, test) and are normalized to sum to one.
pub fn assign_random_splits(records: &mut [ImageRecord], fractions: (f64, f64, f64), seed: u64) {
    let mut idx: Vec<usize> = records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.split.is_none())
        .map(|(i, _)| i)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let total = fractions.0 + fractions.1 + fractions.2;
    let n = idx.len() as f64;
    let n_train = (n * fractions.0 / total).round() as usize;
    let n_val = ((n * fractions.1 / total).round() as usize).min(idx.len() - n_train);
    for (k, &i) in idx.iter().enumerate() {
        records[i].split = Some(if k < n_train {
            Split::Train
        } else if k < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        });
    }
}

fn parse_unit(path: &Path, line: u64, column: &str, cell: &str) -> Result<f64, DataError> {
    let v: f64 = cell
        .parse()
        .map_err(|_| DataError::parse(path, line, format!("{column}: '{cell}' is not a number")))?;
    if !(0.0..=1.0).contains(&v) {
        return Err(DataError::parse(
            path,
            line,
            format!("{column}: {v} is outside [0, 1]"),
        ));
    }
    Ok(v)
}

fn parse_sensitivity(
    path: &Path,
    line: u64,
    column: &str,
    cell: &str,
) -> Result<Option<Sensitivity>, DataError> {
    if cell.is_empty() || cell.eq_ignore_ascii_case("UNKNOWN") {
        return Ok(None);
    }
    if let Some(level) = Likelihood::from_token(cell) {
        return Ok(Some(Sensitivity::Level(level)));
    }
    parse_unit(path, line, column, cell).map(|v| Some(Sensitivity::Score(v)))
}

/// Reads the eight-column privacy feature store. Empty or `UNKNOWN`
/// sensitivity cells load as missing.
pub fn load_privacy_features(
    path: impl AsRef<Path>,
) -> Result<BTreeMap<String, PrivacyFeatureVector>, DataError> {
    let path = path.as_ref();
    let mut rdr = csv_reader(open(path)?);
    let headers = rdr.headers().map_err(|e| csv_error(path, e, 0))?.clone();
    let expected: Vec<&str> = PRIVACY_HEADER.split(',').collect();
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(DataError::parse(
            path,
            1,
            format!("expected header '{PRIVACY_HEADER}'"),
        ));
    }
    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e, 0))?;
        let line = record_line(&rec, 0);
        let image_id = rec[0].to_string();
        let mut v = PrivacyFeatureVector {
            adult: None,
            racy: None,
            medical: None,
            spoofed: None,
            violent: None,
            people_prob: parse_unit(path, line, "people_prob", &rec[6])?,
            people_count: rec[7].parse().map_err(|_| {
                DataError::parse(
                    path,
                    line,
                    format!("people_count: '{}' is not a non-negative integer", &rec[7]),
                )
            })?,
            outdoor_prob: parse_unit(path, line, "outdoor_prob", &rec[8])?,
        };
        for (k, class) in SensitivityClass::ALL.into_iter().enumerate() {
            let s = parse_sensitivity(path, line, class.name(), &rec[k + 1])?;
            v.set_sensitivity(class, s);
        }
        if out.insert(image_id.clone(), v).is_some() {
            return Err(DataError::DuplicateId(image_id));
        }
    }
    Ok(out)
}

fn format_sensitivity(s: Option<Sensitivity>) -> String {
    match s {
        None => String::new(),
        Some(Sensitivity::Level(l)) => l.token().to_string(),
        Some(Sensitivity::Score(v)) => v.to_string(),
    }
}

/// Serializes privacy rows in the given order.
pub fn privacy_features_csv<'a>(
    rows: impl IntoIterator<Item = (&'a str, &'a PrivacyFeatureVector)>,
) -> String {
    let mut out = String::from(PRIVACY_HEADER);
    out.push('\n');
    for (id, v) in rows {
        out.push_str(id);
        for class in SensitivityClass::ALL {
            out.push(',');
            out.push_str(&format_sensitivity(v.sensitivity(class)));
        }
        out.push_str(&format!(
            ",{},{},{}\n",
            v.people_prob, v.people_count, v.outdoor_prob
        ));
    }
    out
}

fn parse_deep_preamble(path: &Path, line: &str) -> Result<(String, usize), DataError> {
    let body = line
        .trim()
        .strip_prefix('#')
        .ok_or_else(|| DataError::parse(path, 1, "expected '#source_tag=<tag>,dim=<D>'"))?;
    let mut tag = None;
    let mut dim = None;
    for part in body.split(',') {
        match part.split_once('=') {
            Some(("source_tag", v)) if !v.trim().is_empty() => tag = Some(v.trim().to_string()),
            Some(("dim", v)) => {
                dim = Some(v.trim().parse::<usize>().map_err(|_| {
                    DataError::parse(path, 1, format!("invalid dim '{v}'"))
                })?)
            }
            _ => return Err(DataError::parse(path, 1, format!("unexpected '{part}'"))),
        }
    }
    match (tag, dim) {
        (Some(t), Some(d)) if d > 0 => Ok((t, d)),
        _ => Err(DataError::parse(
            path,
            1,
            "preamble must declare source_tag and a positive dim",
        )),
    }
}

/// Reads a deep feature store: `#source_tag=<tag>,dim=<D>` followed by
/// `image_id,v0,...,v{D-1}`.
pub fn load_deep_features(path: impl AsRef<Path>) -> Result<DeepStore, DataError> {
    let path = path.as_ref();
    let mut reader = BufReader::new(open(path)?);
    let mut first = String::new();
    reader
        .read_line(&mut first)
        .map_err(|e| DataError::io(path, e))?;
    let (source_tag, dim) = parse_deep_preamble(path, &first)?;

    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_error(path, e, 1))?.clone();
    if headers.get(0) != Some("image_id") || headers.len() != dim + 1 {
        return Err(DataError::parse(
            path,
            2,
            format!("header must be image_id followed by {dim} value columns"),
        ));
    }

    let mut vectors = HashMap::new();
    let mut order = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e, 1))?;
        let line = record_line(&rec, 1);
        let image_id = rec[0].to_string();
        if rec.len() - 1 != dim {
            return Err(DataError::DimensionMismatch {
                image_id,
                expected: dim,
                found: rec.len() - 1,
            });
        }
        let values = rec
            .iter()
            .skip(1)
            .map(|c| match c.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(DataError::parse(path, line, format!("'{c}' is not a finite number"))),
            })
            .collect::<Result<Vec<f64>, _>>()?;
        if vectors
            .insert(image_id.clone(), DeepFeatureVector::new(source_tag.clone(), values))
            .is_some()
        {
            return Err(DataError::DuplicateId(image_id));
        }
        order.push(image_id);
    }
    Ok(DeepStore {
        source_tag,
        dim,
        vectors,
        order,
    })
}

pub fn load_feature_store(path: impl AsRef<Path>, kind: StoreKind) -> Result<FeatureStore, DataError> {
    match kind {
        StoreKind::Privacy => load_privacy_features(path).map(FeatureStore::Privacy),
        StoreKind::Deep => load_deep_features(path).map(FeatureStore::Deep),
    }
}

/// Serializes a deep store with its preamble, rows in `order`.
pub fn deep_features_csv(store: &DeepStore) -> String {
    let mut out = format!("#source_tag={},dim={}\nimage_id", store.source_tag, store.dim);
    for i in 0..store.dim {
        out.push_str(&format!(",v{i}"));
    }
    out.push('\n');
    for id in &store.order {
        out.push_str(id);
        for v in &store.vectors[id].values {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

/// Reads `image_id,assessor_id,vote`; votes for one image are merged in file order.
pub fn load_annotations(
    path: impl AsRef<Path>,
) -> Result<BTreeMap<String, AnnotationRecord>, DataError> {
    let path = path.as_ref();
    let mut rdr = csv_reader(open(path)?);
    let headers = rdr.headers().map_err(|e| csv_error(path, e, 0))?.clone();
    let id_col = column_index(path, &headers, "image_id", 1)?;
    let assessor_col = column_index(path, &headers, "assessor_id", 1)?;
    let vote_col = column_index(path, &headers, "vote", 1)?;

    let mut out: BTreeMap<String, AnnotationRecord> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e, 0))?;
        let image_id = rec[id_col].to_string();
        let vote: FiveClassVote = rec[vote_col].parse()?;
        let entry = out
            .entry(image_id.clone())
            .or_insert_with(|| AnnotationRecord {
                image_id,
                votes: Vec::new(),
                assessor_ids: Some(Vec::new()),
            });
        entry.votes.push(vote);
        if let Some(ids) = entry.assessor_ids.as_mut() {
            ids.push(rec[assessor_col].to_string());
        }
    }
    for r in out.values_mut() {
        if r.assessor_ids.as_ref().is_some_and(|ids| ids.iter().all(String::is_empty)) {
            r.assessor_ids = None;
        }
    }
    Ok(out)
}

/// Manifest records joined with every loaded feature store and annotation file.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub records: Vec<ImageRecord>,
    pub privacy_features: BTreeMap<String, PrivacyFeatureVector>,
    /// Keyed by source tag.
    pub deep_features: BTreeMap<String, DeepStore>,
    pub annotations: BTreeMap<String, AnnotationRecord>,
    /// Ids present in a store but absent from the manifest.
    pub warnings: Vec<String>,
}

/// Aligned design matrix, targets and row ids.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub x: FeatureMatrix,
    pub y: LabelVector,
    pub ids: Vec<String>,
}

impl DesignMatrix {
    pub fn labels(&self) -> Vec<PrivacyLabel> {
        self.y
            .iter()
            .map(|&v| {
                if v >= 0.5 {
                    PrivacyLabel::Private
                } else {
                    PrivacyLabel::Public
                }
            })
            .collect()
    }
}

impl Dataset {
    pub fn new(records: Vec<ImageRecord>) -> Self {
        Dataset {
            records,
            ..Default::default()
        }
    }

    fn manifest_ids(&self) -> HashSet<&str> {
        self.records.iter().map(|r| r.image_id.as_str()).collect()
    }

    fn note_orphans<'a>(&mut self, what: &str, ids: impl Iterator<Item = &'a String>) {
        let known = self.manifest_ids();
        let mut orphans: Vec<String> = ids
            .filter(|id| !known.contains(id.as_str()))
            .cloned()
            .collect();
        orphans.sort();
        for id in orphans {
            let msg = format!("{what}: image '{id}' is not in the manifest");
            log::warn!("{msg}");
            self.warnings.push(msg);
        }
    }

    pub fn with_privacy_features(mut self, store: BTreeMap<String, PrivacyFeatureVector>) -> Self {
        self.note_orphans("privacy features", store.keys());
        self.privacy_features = store;
        self
    }

    pub fn with_deep_store(mut self, store: DeepStore) -> Self {
        let label = format!("deep features [{}]", store.source_tag);
        self.note_orphans(&label, store.order.iter());
        self.deep_features.insert(store.source_tag.clone(), store);
        self
    }

    pub fn with_annotations(mut self, annotations: BTreeMap<String, AnnotationRecord>) -> Self {
        self.note_orphans("annotations", annotations.keys());
        self.annotations = annotations;
        self
    }

    pub fn record(&self, image_id: &str) -> Option<&ImageRecord> {
        self.records.iter().find(|r| r.image_id == image_id)
    }

    /// Fills in block dimensions for `groups` from the loaded stores.
    pub fn resolve_spec(
        &self,
        groups: FeatureGroups,
        deep_source_tag: Option<&str>,
    ) -> Result<FeatureSpec, DataError> {
        if groups.is_empty() {
            return Err(FeatureError::EmptySelection.into());
        }
        let mut spec = FeatureSpec::new(groups);
        if groups.contains(FeatureGroup::Places) {
            let store = self
                .deep_features
                .get(PLACES_SOURCE_TAG)
                .ok_or_else(|| DataError::MissingStore(PLACES_SOURCE_TAG.into()))?;
            spec = spec.with_places(store.dim);
        }
        if groups.contains(FeatureGroup::Deep) {
            let tag = deep_source_tag.ok_or(DataError::MissingSourceTag)?;
            let store = self
                .deep_features
                .get(tag)
                .ok_or_else(|| DataError::MissingStore(tag.into()))?;
            spec = spec.with_deep(tag, store.dim);
        }
        Ok(spec)
    }

    /// Checks that the dataset can supply every block `spec` asks for.
    pub fn check_spec(&self, spec: &FeatureSpec) -> Result<(), DataError> {
        let resolved = self.resolve_spec(spec.groups, spec.deep_source_tag.as_deref())?;
        if resolved.dim() != spec.dim() {
            let (expected, found) = (spec.dim().unwrap_or(0), resolved.dim().unwrap_or(0));
            return Err(FeatureError::DimensionMismatch {
                source_tag: spec.deep_source_tag.clone().unwrap_or_else(|| "places365".into()),
                expected,
                found,
            }
            .into());
        }
        if spec.groups.needs_privacy() && self.privacy_features.is_empty() {
            let group = spec.groups.iter().next().unwrap_or(FeatureGroup::Sens);
            return Err(DataError::MissingFeatures {
                image_id: "*".into(),
                group,
            });
        }
        Ok(())
    }

    fn inputs_for(&self, image_id: &str, spec: &FeatureSpec) -> FeatureInputs<'_> {
        FeatureInputs {
            privacy: self.privacy_features.get(image_id),
            places: self
                .deep_features
                .get(PLACES_SOURCE_TAG)
                .and_then(|s| s.vectors.get(image_id)),
            deep: spec
                .deep_source_tag
                .as_deref()
                .and_then(|t| self.deep_features.get(t))
                .and_then(|s| s.vectors.get(image_id)),
        }
    }

    /// Rows for every labeled image in `split` (or all splits when `None`),
    /// in manifest order.
    pub fn build_design_matrix(
        &self,
        split: Option<Split>,
        spec: &FeatureSpec,
    ) -> Result<DesignMatrix, DataError> {
        let dim = spec.dim().ok_or(DataError::MissingSourceTag)?;
        let selected: Vec<&ImageRecord> = self
            .records
            .iter()
            .filter(|r| split.is_none() || r.split == split)
            .collect();
        if selected.is_empty() {
            return Err(DataError::EmptySelection);
        }
        let mut data = Vec::with_capacity(selected.len() * dim);
        let mut y = Vec::with_capacity(selected.len());
        let mut ids = Vec::with_capacity(selected.len());
        for r in selected {
            let label = r
                .label
                .ok_or_else(|| DataError::MissingLabel(r.image_id.clone()))?;
            let row = assemble_features(&self.inputs_for(&r.image_id, spec), spec).map_err(
                |e| match e {
                    FeatureError::MissingGroupData(group) => DataError::MissingFeatures {
                        image_id: r.image_id.clone(),
                        group,
                    },
                    other => other.into(),
                },
            )?;
            data.extend(row);
            y.push(label.target());
            ids.push(r.image_id.clone());
        }
        let x = Array2::from_shape_vec((ids.len(), dim), data)
            .expect("assembled rows match the spec dimension");
        Ok(DesignMatrix {
            x,
            y: Array1::from(y),
            ids,
        })
    }
}

/// Writes `contents` to `path`, creating parent directories.
pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), DataError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| DataError::io(parent, e))?;
    }
    let mut f = File::create(path).map_err(|e| DataError::io(path, e))?;
    f.write_all(contents.as_ref())
        .map_err(|e| DataError::io(path, e))
}
