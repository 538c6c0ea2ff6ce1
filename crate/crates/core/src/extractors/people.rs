use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ExtractError;

pub const PERSON_CLASS: &str = "person";
pub const DEFAULT_CONFIDENCE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub class_name: String,
    pub confidence: f64,
}

impl Detection {
    pub fn new(class_name: impl Into<String>, confidence: f64) -> Self {
        Detection {
            class_name: class_name.into(),
            confidence,
        }
    }

    fn is_person(&self) -> bool {
        self.class_name == PERSON_CLASS
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeopleFeatures {
    pub people_count: u32,
    pub people_prob: f64,
}

/// Counts person detections at or above `threshold`; the probability is the
/// highest person confidence regardless of the threshold.
pub fn people_features(detections: &[Detection], threshold: f64) -> PeopleFeatures {
    let persons = detections.iter().filter(|d| d.is_person());
    let (count, prob) = persons.fold((0u32, 0.0f64), |(n, best), d| {
        (n + (d.confidence >= threshold) as u32, best.max(d.confidence))
    });
    PeopleFeatures {
        people_count: count,
        people_prob: prob,
    }
}

/// Reads `image_id,class_name,confidence`, one row per detection.
pub fn load_detections(path: impl AsRef<Path>) -> Result<BTreeMap<String, Vec<Detection>>, ExtractError> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| ExtractError::input(path, e))?;
    let headers = rdr.headers().map_err(|e| ExtractError::input(path, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["image_id", "class_name", "confidence"] {
        return Err(ExtractError::input(path, "expected header image_id,class_name,confidence"));
    }
    let mut out: BTreeMap<String, Vec<Detection>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| ExtractError::input(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let confidence: f64 = rec[2]
            .parse()
            .ok()
            .filter(|c: &f64| (0.0..=1.0).contains(c))
            .ok_or_else(|| {
                ExtractError::input(path, format!("line {line}: confidence '{}' not in [0, 1]", &rec[2]))
            })?;
        out.entry(rec[0].to_string())
            .or_default()
            .push(Detection::new(&rec[1], confidence));
    }
    Ok(out)
}
