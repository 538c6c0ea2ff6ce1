//! Analyses of human privacy annotations: controversial images, people and
//! sensitivity breakdowns, and group-wise private probabilities.
//!
//! Vote folding merges `ClearlyPrivate` into private and `ClearlyPublic` into
//! public. Undecidable votes count toward the total number of votes but toward
//! neither side.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data_io::{AnnotationRecord, Dataset, FiveClassVote};
use crate::feature_model::{Likelihood, PrivacyFeatureVector, PrivacyLabel, SensitivityClass};

/// Share of votes above which one side counts as clearly prioritised.
pub const CONTROVERSY_MAX_SHARE_PERCENT: usize = 65;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AnalysisError {
    #[error("controversy needs at least two votes, got {0}")]
    TooFewVotes(usize),
    #[error("no controversial images in the dataset")]
    EmptyControversialSet,
    #[error("no eligible images for this analysis")]
    EmptyDataset,
    #[error("image '{0}' has no privacy features")]
    MissingFeatures(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct VoteSummary {
    pub n_votes: usize,
    pub n_private: usize,
    pub n_public: usize,
    pub n_undecidable: usize,
}

pub fn summarize_votes(votes: &[FiveClassVote]) -> VoteSummary {
    let mut s = VoteSummary {
        n_votes: votes.len(),
        ..Default::default()
    };
    for v in votes {
        match v.folded() {
            FiveClassVote::Private => s.n_private += 1,
            FiveClassVote::Public => s.n_public += 1,
            _ => s.n_undecidable += 1,
        }
    }
    s
}

pub fn summarize_record(r: &AnnotationRecord) -> VoteSummary {
    summarize_votes(&r.votes)
}

/// Both sides present and neither holding more than 65% of all votes.
pub fn is_controversial(s: &VoteSummary) -> Result<bool, AnalysisError> {
    if s.n_votes < 2 {
        return Err(AnalysisError::TooFewVotes(s.n_votes));
    }
    let within = |k: usize| 100 * k <= CONTROVERSY_MAX_SHARE_PERCENT * s.n_votes;
    Ok(s.n_private >= 1 && s.n_public >= 1 && within(s.n_private) && within(s.n_public))
}

/// Thresholds turning privacy features into group memberships.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroupThresholds {
    pub min_people: u32,
    pub sensitive_level: Likelihood,
    pub outdoor_prob: f64,
}

impl Default for GroupThresholds {
    fn default() -> Self {
        GroupThresholds {
            min_people: 1,
            sensitive_level: Likelihood::Possible,
            outdoor_prob: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GroupMembership {
    pub has_people: bool,
    pub is_sensitive: bool,
    pub is_outdoor: bool,
}

impl GroupMembership {
    pub fn of(p: &PrivacyFeatureVector, t: &GroupThresholds) -> Self {
        GroupMembership {
            has_people: p.people_count >= t.min_people,
            is_sensitive: SensitivityClass::ALL
                .iter()
                .filter_map(|&c| p.sensitivity(c))
                .any(|s| s.level() >= t.sensitive_level),
            is_outdoor: p.outdoor_prob >= t.outdoor_prob,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControversialImage {
    pub image_id: String,
    pub summary: VoteSummary,
}

/// Images with at least two votes that meet the controversy criterion,
/// ordered by image id.
pub fn controversial_images(ds: &Dataset) -> Vec<ControversialImage> {
    ds.annotations
        .values()
        .filter_map(|r| {
            let summary = summarize_record(r);
            matches!(is_controversial(&summary), Ok(true)).then(|| ControversialImage {
                image_id: r.image_id.clone(),
                summary,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeopleBreakdown {
    pub one_person: f64,
    pub two_plus: f64,
    pub none: f64,
    pub n_images: usize,
}

/// How many people controversial images show: one, two or more, none.
pub fn controversial_people_breakdown(ds: &Dataset) -> Result<PeopleBreakdown, AnalysisError> {
    let set = controversial_images(ds);
    if set.is_empty() {
        return Err(AnalysisError::EmptyControversialSet);
    }
    let (mut one, mut many, mut none) = (0usize, 0usize, 0usize);
    for img in &set {
        let p = ds
            .privacy_features
            .get(&img.image_id)
            .ok_or_else(|| AnalysisError::MissingFeatures(img.image_id.clone()))?;
        match p.people_count {
            0 => none += 1,
            1 => one += 1,
            _ => many += 1,
        }
    }
    let n = set.len() as f64;
    Ok(PeopleBreakdown {
        one_person: one as f64 / n,
        two_plus: many as f64 / n,
        none: none as f64 / n,
        n_images: set.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Location {
    Indoor,
    Outdoor,
}

/// Labeled images that also have privacy features, in manifest order.
fn labeled_with_features(ds: &Dataset) -> impl Iterator<Item = (&str, PrivacyLabel, &PrivacyFeatureVector)> {
    ds.records.iter().filter_map(|r| {
        let label = r.label?;
        let p = ds.privacy_features.get(&r.image_id)?;
        Some((r.image_id.as_str(), label, p))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CumulativePoint {
    pub max_people: u32,
    pub p_private: f64,
    pub support: usize,
}

/// `P(private | people_count <= k)` for every k up to the largest count,
/// optionally restricted to indoor or outdoor images. Values of k with no
/// images at or below them are omitted.
pub fn cumulative_private_by_people(
    ds: &Dataset,
    location: Option<Location>,
    thresholds: &GroupThresholds,
) -> Result<Vec<CumulativePoint>, AnalysisError> {
    let rows: Vec<(u32, bool)> = labeled_with_features(ds)
        .filter(|(_, _, p)| {
            let outdoor = GroupMembership::of(p, thresholds).is_outdoor;
            match location {
                None => true,
                Some(Location::Outdoor) => outdoor,
                Some(Location::Indoor) => !outdoor,
            }
        })
        .map(|(_, l, p)| (p.people_count, l.is_private()))
        .collect();
    let max = rows.iter().map(|r| r.0).max().ok_or(AnalysisError::EmptyDataset)?;
    let mut hist = vec![(0usize, 0usize); max as usize + 1];
    for (count, private) in &rows {
        let h = &mut hist[*count as usize];
        h.0 += 1;
        h.1 += *private as usize;
    }
    let mut out = Vec::new();
    let (mut total, mut private) = (0usize, 0usize);
    for (k, (n, np)) in hist.into_iter().enumerate() {
        total += n;
        private += np;
        if total > 0 {
            out.push(CumulativePoint {
                max_people: k as u32,
                p_private: private as f64 / total as f64,
                support: total,
            });
        }
    }
    Ok(out)
}

/// Counts indexed by `[class][level][label]`, label 0 = private, 1 = public.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SensitivityDistribution {
    pub counts: [[[u64; 2]; 5]; 5],
}

fn label_index(l: PrivacyLabel) -> usize {
    match l {
        PrivacyLabel::Private => 0,
        PrivacyLabel::Public => 1,
    }
}

impl SensitivityDistribution {
    pub fn count(&self, class: SensitivityClass, level: Likelihood, label: PrivacyLabel) -> u64 {
        self.counts[class as usize][level.index()][label_index(label)]
    }

    /// Share of `label` images of `class` that sit at `level`; `None` when
    /// there are no such images.
    pub fn share(&self, class: SensitivityClass, level: Likelihood, label: PrivacyLabel) -> Option<f64> {
        let total: u64 = Likelihood::ALL
            .iter()
            .map(|&l| self.count(class, l, label))
            .sum();
        (total > 0).then(|| self.count(class, level, label) as f64 / total as f64)
    }

    pub fn is_empty(&self) -> bool {
        self.counts.iter().flatten().flatten().all(|&c| c == 0)
    }
}

/// Level distribution of each sensitivity class, split by privacy label.
/// Missing sensitivity values are skipped for that class.
pub fn sensitivity_label_distribution(ds: &Dataset) -> SensitivityDistribution {
    let mut d = SensitivityDistribution::default();
    for (_, label, p) in labeled_with_features(ds) {
        for class in SensitivityClass::ALL {
            if let Some(s) = p.sensitivity(class) {
                d.counts[class as usize][s.level().index()][label_index(label)] += 1;
            }
        }
    }
    d
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelProbability {
    pub level: Likelihood,
    /// `None` when no image has this level.
    pub p_private: Option<f64>,
    pub support: u64,
}

/// `P(private | class = level)` for every level, from the lowest to the highest.
pub fn private_prob_given_sensitivity(ds: &Dataset, class: SensitivityClass) -> Vec<LevelProbability> {
    let d = sensitivity_label_distribution(ds);
    Likelihood::ALL
        .iter()
        .map(|&level| {
            let private = d.count(class, level, PrivacyLabel::Private);
            let support = private + d.count(class, level, PrivacyLabel::Public);
            LevelProbability {
                level,
                p_private: (support > 0).then(|| private as f64 / support as f64),
                support,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupCell {
    pub membership: GroupMembership,
    pub count: usize,
    pub share: f64,
    pub p_private: Option<f64>,
}

/// Population share and private probability for all eight
/// people × sensitive × outdoor combinations.
pub fn group_privacy_probabilities(ds: &Dataset, thresholds: &GroupThresholds) -> Vec<GroupCell> {
    let mut tallies = [(0usize, 0usize); 8];
    let index = |m: &GroupMembership| {
        (m.has_people as usize) << 2 | (m.is_sensitive as usize) << 1 | m.is_outdoor as usize
    };
    let mut total = 0usize;
    for (_, label, p) in labeled_with_features(ds) {
        let t = &mut tallies[index(&GroupMembership::of(p, thresholds))];
        t.0 += 1;
        t.1 += label.is_private() as usize;
        total += 1;
    }
    (0..8)
        .map(|i| {
            let membership = GroupMembership {
                has_people: i & 4 != 0,
                is_sensitive: i & 2 != 0,
                is_outdoor: i & 1 != 0,
            };
            let (count, private) = tallies[i];
            GroupCell {
                membership,
                count,
                share: if total > 0 { count as f64 / total as f64 } else { 0.0 },
                p_private: (count > 0).then(|| private as f64 / count as f64),
            }
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn controversial_csv(items: &[ControversialImage]) -> String {
    let mut s = String::from("image_id,n_votes,n_private,n_public,n_undecidable\n");
    for c in items {
        let v = &c.summary;
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            c.image_id, v.n_votes, v.n_private, v.n_public, v.n_undecidable
        ));
    }
    s
}

pub fn people_breakdown_csv(b: &PeopleBreakdown) -> String {
    format!(
        "group,fraction\none_person,{}\ntwo_plus,{}\nnone,{}\n",
        b.one_person, b.two_plus, b.none
    )
}

pub fn cumulative_csv(curves: &[(&str, &[CumulativePoint])]) -> String {
    let mut s = String::from("location,max_people,p_private,support\n");
    for (loc, points) in curves {
        for p in *points {
            s.push_str(&format!("{loc},{},{},{}\n", p.max_people, p.p_private, p.support));
        }
    }
    s
}

pub fn sensitivity_csv(d: &SensitivityDistribution) -> String {
    let mut s = String::from("class,level,label,count,share\n");
    for class in SensitivityClass::ALL {
        for level in Likelihood::ALL {
            for label in [PrivacyLabel::Private, PrivacyLabel::Public] {
                s.push_str(&format!(
                    "{class},{level},{label},{},{}\n",
                    d.count(class, level, label),
                    opt(d.share(class, level, label))
                ));
            }
        }
    }
    s
}

pub fn conditional_csv(rows: &[(SensitivityClass, Vec<LevelProbability>)]) -> String {
    let mut s = String::from("class,level,p_private,support\n");
    for (class, levels) in rows {
        for l in levels {
            s.push_str(&format!("{class},{},{},{}\n", l.level, opt(l.p_private), l.support));
        }
    }
    s
}

pub fn groups_csv(cells: &[GroupCell]) -> String {
    let mut s = String::from("has_people,is_sensitive,is_outdoor,count,share,p_private\n");
    for c in cells {
        let m = c.membership;
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            m.has_people,
            m.is_sensitive,
            m.is_outdoor,
            c.count,
            c.share,
            opt(c.p_private)
        ));
    }
    s
}
