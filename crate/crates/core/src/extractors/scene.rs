use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ExtractError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SceneIo {
    Indoor,
    Outdoor,
}

pub type IoMap = HashMap<String, SceneIo>;

/// Scene-classifier output: one probability per named category.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneDistribution {
    pub probs: Vec<f64>,
    pub category_names: Vec<String>,
}

impl SceneDistribution {
    /// Validates lengths, non-negativity and normalization (within 1e-6).
    pub fn new(probs: Vec<f64>, category_names: Vec<String>) -> Result<Self, ExtractError> {
        if probs.len() != category_names.len() {
            return Err(ExtractError::InvalidScene(format!(
                "{} probabilities for {} categories",
                probs.len(),
                category_names.len()
            )));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(ExtractError::InvalidScene("negative or non-finite probability".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(ExtractError::InvalidScene(format!("probabilities sum to {total}")));
        }
        Ok(SceneDistribution {
            probs,
            category_names,
        })
    }
}

/// Total probability mass on categories mapped to outdoor, clamped to [0, 1].
pub fn outdoor_probability(scene: &SceneDistribution, io_map: &IoMap) -> Result<f64, ExtractError> {
    let mut outdoor = 0.0;
    for (name, p) in scene.category_names.iter().zip(&scene.probs) {
        match io_map.get(name) {
            Some(SceneIo::Outdoor) => outdoor += p,
            Some(SceneIo::Indoor) => {}
            None => return Err(ExtractError::UnmappedCategory(name.clone())),
        }
    }
    Ok(outdoor.clamp(0.0, 1.0))
}

/// One category name per line. Lines in the `/a/abbey 0` layout keep only the name.
pub fn load_categories(path: impl AsRef<Path>) -> Result<Vec<String>, ExtractError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| ExtractError::input(path, e))?;
    Ok(text
        .lines()
        .filter_map(|l| l.split_whitespace().next())
        .map(str::to_string)
        .collect())
}

/// Lines of `name,indoor|outdoor`, or the whitespace-separated `/a/airfield 2`
/// layout where 1 is indoor and 2 outdoor. Blank lines and `#` comments are skipped.
pub fn load_io_map(path: impl AsRef<Path>) -> Result<IoMap, ExtractError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| ExtractError::input(path, e))?;
    let mut map = IoMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (name, io) = line
            .rsplit_once(',')
            .or_else(|| line.rsplit_once(char::is_whitespace))
            .ok_or_else(|| ExtractError::input(path, format!("line {}: expected name,indoor|outdoor", i + 1)))?;
        let io = match io.trim().to_ascii_lowercase().as_str() {
            "indoor" | "1" => SceneIo::Indoor,
            "outdoor" | "2" => SceneIo::Outdoor,
            other => {
                return Err(ExtractError::input(path, format!("line {}: unknown class '{other}'", i + 1)))
            }
        };
        map.insert(name.trim().to_string(), io);
    }
    Ok(map)
}
