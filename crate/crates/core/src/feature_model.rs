//! Canonical privacy-feature schema, likelihood encoding, feature assembly and
//! column standardization.
//!
//! The eight privacy features always encode in the order
//! `adult, racy, medical, spoofed, violent, people_prob, people_count, outdoor_prob`.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Row-major design matrix, one row per image.
pub type FeatureMatrix = Array2<f64>;
/// Binary targets aligned with a [`FeatureMatrix`]: Private = 1, Public = 0.
pub type LabelVector = Array1<f64>;

/// Number of encoded privacy features.
pub const PRIVACY_DIM: usize = 8;
/// Dimensionality of the Places365 scene-probability block.
pub const PLACES_DIM: usize = 365;
/// Source tag under which scene probabilities are stored.
pub const PLACES_SOURCE_TAG: &str = "places365";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("feature group {0} is selected but its source data is missing")]
    MissingGroupData(FeatureGroup),
    #[error("dimension mismatch for '{source_tag}': expected {expected}, found {found}")]
    DimensionMismatch {
        source_tag: String,
        expected: usize,
        found: usize,
    },
    #[error("deep features tagged '{found}' where '{expected}' was required")]
    SourceTagMismatch { expected: String, found: String },
    #[error("no feature group selected")]
    EmptySelection,
    #[error("cannot fit on an empty matrix")]
    EmptyMatrix,
    #[error("matrix contains non-finite values")]
    NonFinite,
    #[error("unknown feature group '{0}'")]
    UnknownGroup(String),
}

/// Five-level likelihood scale reported by the sensitivity service.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Likelihood {
    VeryUnlikely,
    Unlikely,
    Possible,
    Likely,
    VeryLikely,
}

impl Likelihood {
    pub const ALL: [Likelihood; 5] = [
        Likelihood::VeryUnlikely,
        Likelihood::Unlikely,
        Likelihood::Possible,
        Likelihood::Likely,
        Likelihood::VeryLikely,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Linear mapping `index / 4` onto [0, 1].
    pub fn encode(self) -> f64 {
        self.index() as f64 / 4.0
    }

    /// Level whose encoding is closest to `score` (clamped to [0, 1]).
    pub fn nearest(score: f64) -> Likelihood {
        let idx = (score.clamp(0.0, 1.0) * 4.0).round() as usize;
        Likelihood::ALL[idx.min(4)]
    }

    pub fn token(self) -> &'static str {
        match self {
            Likelihood::VeryUnlikely => "VERY_UNLIKELY",
            Likelihood::Unlikely => "UNLIKELY",
            Likelihood::Possible => "POSSIBLE",
            Likelihood::Likely => "LIKELY",
            Likelihood::VeryLikely => "VERY_LIKELY",
        }
    }

    pub fn from_token(token: &str) -> Option<Likelihood> {
        match token.trim().to_ascii_uppercase().as_str() {
            "VERY_UNLIKELY" => Some(Likelihood::VeryUnlikely),
            "UNLIKELY" => Some(Likelihood::Unlikely),
            "POSSIBLE" => Some(Likelihood::Possible),
            "LIKELY" => Some(Likelihood::Likely),
            "VERY_LIKELY" => Some(Likelihood::VeryLikely),
            _ => None,
        }
    }
}

impl fmt::Display for Likelihood {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// Binary privacy label. `Private` is the positive class everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PrivacyLabel {
    Private,
    Public,
}

impl PrivacyLabel {
    pub fn is_private(self) -> bool {
        self == PrivacyLabel::Private
    }

    /// Training target: 1.0 for Private, 0.0 for Public.
    pub fn target(self) -> f64 {
        match self {
            PrivacyLabel::Private => 1.0,
            PrivacyLabel::Public => 0.0,
        }
    }

    pub fn swapped(self) -> PrivacyLabel {
        match self {
            PrivacyLabel::Private => PrivacyLabel::Public,
            PrivacyLabel::Public => PrivacyLabel::Private,
        }
    }
}

impl fmt::Display for PrivacyLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PrivacyLabel::Private => f.write_str("private"),
            PrivacyLabel::Public => f.write_str("public"),
        }
    }
}

/// The five sensitive-content classes, in canonical feature order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensitivityClass {
    Adult,
    Racy,
    Medical,
    Spoofed,
    Violent,
}

impl SensitivityClass {
    pub const ALL: [SensitivityClass; 5] = [
        SensitivityClass::Adult,
        SensitivityClass::Racy,
        SensitivityClass::Medical,
        SensitivityClass::Spoofed,
        SensitivityClass::Violent,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SensitivityClass::Adult => "adult",
            SensitivityClass::Racy => "racy",
            SensitivityClass::Medical => "medical",
            SensitivityClass::Spoofed => "spoofed",
            SensitivityClass::Violent => "violent",
        }
    }
}

impl fmt::Display for SensitivityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SensitivityClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SensitivityClass::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown sensitivity class '{s}'"))
    }
}

/// A sensitivity cell: either a discrete level or an already-numeric score in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Sensitivity {
    Level(Likelihood),
    Score(f64),
}

impl Sensitivity {
    pub fn encode(self) -> f64 {
        match self {
            Sensitivity::Level(l) => l.encode(),
            Sensitivity::Score(s) => s,
        }
    }

    /// Discrete level; numeric scores snap to the nearest level.
    pub fn level(self) -> Likelihood {
        match self {
            Sensitivity::Level(l) => l,
            Sensitivity::Score(s) => Likelihood::nearest(s),
        }
    }
}

/// The eight privacy-specific features of one image.
///
/// Sensitivity fields are `None` when the extractor could not provide them;
/// such values encode as 0.0 and mark the vector as imputed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyFeatureVector {
    pub adult: Option<Sensitivity>,
    pub racy: Option<Sensitivity>,
    pub medical: Option<Sensitivity>,
    pub spoofed: Option<Sensitivity>,
    pub violent: Option<Sensitivity>,
    pub people_prob: f64,
    pub people_count: u32,
    pub outdoor_prob: f64,
}

impl PrivacyFeatureVector {
    pub fn sensitivity(&self, class: SensitivityClass) -> Option<Sensitivity> {
        match class {
            SensitivityClass::Adult => self.adult,
            SensitivityClass::Racy => self.racy,
            SensitivityClass::Medical => self.medical,
            SensitivityClass::Spoofed => self.spoofed,
            SensitivityClass::Violent => self.violent,
        }
    }

    pub fn set_sensitivity(&mut self, class: SensitivityClass, value: Option<Sensitivity>) {
        let slot = match class {
            SensitivityClass::Adult => &mut self.adult,
            SensitivityClass::Racy => &mut self.racy,
            SensitivityClass::Medical => &mut self.medical,
            SensitivityClass::Spoofed => &mut self.spoofed,
            SensitivityClass::Violent => &mut self.violent,
        };
        *slot = value;
    }

    /// True when any sensitivity value was missing and will be imputed as 0.0.
    pub fn is_imputed(&self) -> bool {
        SensitivityClass::ALL
            .iter()
            .any(|&c| self.sensitivity(c).is_none())
    }

    pub fn sensitivity_block(&self) -> [f64; 5] {
        SensitivityClass::ALL.map(|c| self.sensitivity(c).map_or(0.0, Sensitivity::encode))
    }

    pub fn people_block(&self) -> [f64; 2] {
        [self.people_prob, self.people_count as f64]
    }

    pub fn encode(&self) -> [f64; PRIVACY_DIM] {
        let s = self.sensitivity_block();
        let p = self.people_block();
        [s[0], s[1], s[2], s[3], s[4], p[0], p[1], self.outdoor_prob]
    }
}

/// Feature vector produced by an external backbone (or scene classifier).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeepFeatureVector {
    pub source_tag: String,
    pub values: Vec<f64>,
}

impl DeepFeatureVector {
    pub fn new(source_tag: impl Into<String>, values: Vec<f64>) -> Self {
        DeepFeatureVector {
            source_tag: source_tag.into(),
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Toggleable block of input columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FeatureGroup {
    Sens,
    People,
    Out,
    Places,
    Deep,
}

impl FeatureGroup {
    pub const ALL: [FeatureGroup; 5] = [
        FeatureGroup::Sens,
        FeatureGroup::People,
        FeatureGroup::Out,
        FeatureGroup::Places,
        FeatureGroup::Deep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureGroup::Sens => "Sens",
            FeatureGroup::People => "People",
            FeatureGroup::Out => "Out",
            FeatureGroup::Places => "Places",
            FeatureGroup::Deep => "Deep",
        }
    }

    fn bit(self) -> u8 {
        1 << (self as u8)
    }
}

impl fmt::Display for FeatureGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureGroup {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FeatureGroup::ALL
            .into_iter()
            .find(|g| g.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| FeatureError::UnknownGroup(s.to_string()))
    }
}

/// Set of selected feature groups. Iteration follows the canonical block order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct FeatureGroups(u8);

impl FeatureGroups {
    pub const PRIVACY: FeatureGroups = FeatureGroups(0b0111);

    pub fn empty() -> Self {
        FeatureGroups(0)
    }

    pub fn with(mut self, group: FeatureGroup) -> Self {
        self.0 |= group.bit();
        self
    }

    pub fn insert(&mut self, group: FeatureGroup) {
        self.0 |= group.bit();
    }

    pub fn contains(self, group: FeatureGroup) -> bool {
        self.0 & group.bit() != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = FeatureGroup> {
        FeatureGroup::ALL.into_iter().filter(move |g| self.contains(*g))
    }

    pub fn needs_privacy(self) -> bool {
        self.contains(FeatureGroup::Sens)
            || self.contains(FeatureGroup::People)
            || self.contains(FeatureGroup::Out)
    }
}

impl FromIterator<FeatureGroup> for FeatureGroups {
    fn from_iter<I: IntoIterator<Item = FeatureGroup>>(iter: I) -> Self {
        iter.into_iter().fold(FeatureGroups::empty(), FeatureGroups::with)
    }
}

impl fmt::Display for FeatureGroups {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.iter().map(FeatureGroup::name).collect();
        f.write_str(&names.join("+"))
    }
}

impl FromStr for FeatureGroups {
    type Err = FeatureError;

    /// Parses `Sens+People+Out` (also accepts `,` as separator).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let groups = s
            .split(['+', ','])
            .filter(|t| !t.trim().is_empty())
            .map(str::parse)
            .collect::<Result<FeatureGroups, _>>()?;
        if groups.is_empty() {
            return Err(FeatureError::EmptySelection);
        }
        Ok(groups)
    }
}

impl Serialize for FeatureGroups {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.iter().map(FeatureGroup::name))
    }
}

impl<'de> Deserialize<'de> for FeatureGroups {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let names = Vec::<String>::deserialize(deserializer)?;
        names
            .iter()
            .map(|n| n.parse::<FeatureGroup>())
            .collect::<Result<FeatureGroups, _>>()
            .map_err(serde::de::Error::custom)
    }
}

/// Which columns a model consumes: the group selection plus the resolved
/// dimensions of the variable-width blocks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub groups: FeatureGroups,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deep_source_tag: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deep_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub places_dim: Option<usize>,
}

impl FeatureSpec {
    pub fn new(groups: FeatureGroups) -> Self {
        FeatureSpec {
            groups,
            deep_source_tag: None,
            deep_dim: None,
            places_dim: None,
        }
    }

    pub fn with_deep(mut self, source_tag: impl Into<String>, dim: usize) -> Self {
        self.deep_source_tag = Some(source_tag.into());
        self.deep_dim = Some(dim);
        self
    }

    pub fn with_places(mut self, dim: usize) -> Self {
        self.places_dim = Some(dim);
        self
    }

    /// Total number of columns, or `None` when a variable-width block has no
    /// resolved dimension yet.
    pub fn dim(&self) -> Option<usize> {
        self.groups.iter().try_fold(0usize, |acc, g| {
            let d = match g {
                FeatureGroup::Sens => Some(5),
                FeatureGroup::People => Some(2),
                FeatureGroup::Out => Some(1),
                FeatureGroup::Places => self.places_dim,
                FeatureGroup::Deep => self.deep_dim,
            }?;
            Some(acc + d)
        })
    }

    /// Column names in assembly order.
    pub fn column_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for g in self.groups.iter() {
            match g {
                FeatureGroup::Sens => {
                    names.extend(SensitivityClass::ALL.iter().map(|c| c.name().to_string()))
                }
                FeatureGroup::People => {
                    names.push("people_prob".into());
                    names.push("people_count".into());
                }
                FeatureGroup::Out => names.push("outdoor_prob".into()),
                FeatureGroup::Places => {
                    let d = self.places_dim.unwrap_or(0);
                    names.extend((0..d).map(|i| format!("places_{i}")));
                }
                FeatureGroup::Deep => {
                    let tag = self.deep_source_tag.as_deref().unwrap_or("deep");
                    let d = self.deep_dim.unwrap_or(0);
                    names.extend((0..d).map(|i| format!("{tag}_{i}")));
                }
            }
        }
        names
    }
}

/// Per-image sources available for assembly.
#[derive(Debug, Clone, Copy, Default)]
pub struct FeatureInputs<'a> {
    pub privacy: Option<&'a PrivacyFeatureVector>,
    pub places: Option<&'a DeepFeatureVector>,
    pub deep: Option<&'a DeepFeatureVector>,
}

/// Concatenates the selected blocks in canonical order
/// (sensitivity, people, outdoors, places, deep).
pub fn assemble_features(
    inputs: &FeatureInputs<'_>,
    spec: &FeatureSpec,
) -> Result<Vec<f64>, FeatureError> {
    if spec.groups.is_empty() {
        return Err(FeatureError::EmptySelection);
    }
    let mut out = Vec::with_capacity(spec.dim().unwrap_or(PRIVACY_DIM));
    for group in spec.groups.iter() {
        match group {
            FeatureGroup::Sens | FeatureGroup::People | FeatureGroup::Out => {
                let p = inputs.privacy.ok_or(FeatureError::MissingGroupData(group))?;
                match group {
                    FeatureGroup::Sens => out.extend_from_slice(&p.sensitivity_block()),
                    FeatureGroup::People => out.extend_from_slice(&p.people_block()),
                    _ => out.push(p.outdoor_prob),
                }
            }
            FeatureGroup::Places => {
                let v = inputs.places.ok_or(FeatureError::MissingGroupData(group))?;
                check_dim(v, spec.places_dim)?;
                out.extend_from_slice(&v.values);
            }
            FeatureGroup::Deep => {
                let v = inputs.deep.ok_or(FeatureError::MissingGroupData(group))?;
                if let Some(tag) = &spec.deep_source_tag {
                    if *tag != v.source_tag {
                        return Err(FeatureError::SourceTagMismatch {
                            expected: tag.clone(),
                            found: v.source_tag.clone(),
                        });
                    }
                }
                check_dim(v, spec.deep_dim)?;
                out.extend_from_slice(&v.values);
            }
        }
    }
    Ok(out)
}

fn check_dim(v: &DeepFeatureVector, expected: Option<usize>) -> Result<(), FeatureError> {
    match expected {
        Some(expected) if expected != v.dim() => Err(FeatureError::DimensionMismatch {
            source_tag: v.source_tag.clone(),
            expected,
            found: v.dim(),
        }),
        _ => Ok(()),
    }
}

/// Column-wise z-scoring parameters, fitted on the training split only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationParams {
    pub mean: Vec<f64>,
    pub stddev: Vec<f64>,
}

impl StandardizationParams {
    pub fn identity(dim: usize) -> Self {
        StandardizationParams {
            mean: vec![0.0; dim],
            stddev: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Column means and population standard deviations. Columns with
    /// (numerically) zero variance get a stddev of 1.
    pub fn fit(x: &FeatureMatrix) -> Result<Self, FeatureError> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(FeatureError::EmptyMatrix);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(FeatureError::NonFinite);
        }
        let n = x.nrows() as f64;
        let mut mean = Vec::with_capacity(x.ncols());
        let mut stddev = Vec::with_capacity(x.ncols());
        for col in x.axis_iter(Axis(1)) {
            let m = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            let sd = var.sqrt();
            let floor = 1e-12 * m.abs().max(1.0);
            mean.push(m);
            stddev.push(if sd > floor { sd } else { 1.0 });
        }
        Ok(StandardizationParams { mean, stddev })
    }

    pub fn apply(&self, x: &FeatureMatrix) -> Result<FeatureMatrix, FeatureError> {
        if x.ncols() != self.dim() {
            return Err(FeatureError::DimensionMismatch {
                source_tag: "standardizer".into(),
                expected: self.dim(),
                found: x.ncols(),
            });
        }
        let mut out = x.clone();
        for mut row in out.axis_iter_mut(Axis(0)) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.stddev) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }
}

pub fn fit_standardizer(x: &FeatureMatrix) -> Result<StandardizationParams, FeatureError> {
    StandardizationParams::fit(x)
}

pub fn apply_standardizer(
    params: &StandardizationParams,
    x: &FeatureMatrix,
) -> Result<FeatureMatrix, FeatureError> {
    params.apply(x)
}
