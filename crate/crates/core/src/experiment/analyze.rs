use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use super::config::ExperimentConfig;
use super::train::load_dataset;
use super::{write_json, ExperimentError};
use crate::analysis::{
    conditional_csv, controversial_csv, controversial_images, controversial_people_breakdown,
    cumulative_csv, cumulative_private_by_people, group_privacy_probabilities, groups_csv,
    people_breakdown_csv, private_prob_given_sensitivity, sensitivity_csv,
    sensitivity_label_distribution, AnalysisError, Location,
};
use crate::data_io::{write_file, Dataset};
use crate::feature_model::{Likelihood, PrivacyLabel, SensitivityClass};

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AnalysisSummary {
    /// Analyses written, by name.
    pub written: Vec<String>,
    /// Analyses skipped, with the reason.
    pub skipped: Vec<(String, String)>,
}

impl AnalysisSummary {
    fn skip(&mut self, name: &str, reason: impl ToString) {
        let reason = reason.to_string();
        log::warn!("skipping {name} analysis: {reason}");
        self.skipped.push((name.to_string(), reason));
    }
}

fn emit<T: Serialize>(
    out: &Path,
    name: &str,
    json: &T,
    csv: String,
    summary: &mut AnalysisSummary,
) -> Result<(), ExperimentError> {
    write_json(&out.join(format!("{name}.json")), json)?;
    write_file(&out.join(format!("{name}.csv")), csv)?;
    summary.written.push(name.to_string());
    Ok(())
}

fn vote_analyses(ds: &Dataset, out: &Path, summary: &mut AnalysisSummary) -> Result<(), ExperimentError> {
    let set = controversial_images(ds);
    emit(out, "controversial", &set, controversial_csv(&set), summary)?;
    if ds.privacy_features.is_empty() {
        summary.skip("people_breakdown", "no privacy features configured");
        return Ok(());
    }
    match controversial_people_breakdown(ds) {
        Ok(b) => emit(out, "people_breakdown", &b, people_breakdown_csv(&b), summary)?,
        Err(e @ (AnalysisError::EmptyControversialSet | AnalysisError::MissingFeatures(_))) => {
            summary.skip("people_breakdown", e)
        }
        Err(e) => return Err(e.into()),
    }
    Ok(())
}

fn feature_analyses(
    ds: &Dataset,
    cfg: &ExperimentConfig,
    out: &Path,
    summary: &mut AnalysisSummary,
) -> Result<(), ExperimentError> {
    let t = &cfg.analysis;
    let curves = [
        ("all", None),
        ("indoor", Some(Location::Indoor)),
        ("outdoor", Some(Location::Outdoor)),
    ];
    let mut computed = Vec::new();
    for (name, loc) in curves {
        match cumulative_private_by_people(ds, loc, t) {
            Ok(points) => computed.push((name, points)),
            Err(AnalysisError::EmptyDataset) => log::warn!("no {name} images for the cumulative curve"),
            Err(e) => return Err(e.into()),
        }
    }
    if computed.is_empty() {
        summary.skip("cumulative_private_by_people", "no labeled images with features");
    } else {
        let json: serde_json::Map<String, serde_json::Value> = computed
            .iter()
            .map(|(n, p)| (n.to_string(), json!(p)))
            .collect();
        let refs: Vec<(&str, &[_])> = computed.iter().map(|(n, p)| (*n, p.as_slice())).collect();
        emit(out, "cumulative_private_by_people", &json, cumulative_csv(&refs), summary)?;
    }

    let dist = sensitivity_label_distribution(ds);
    if dist.is_empty() {
        summary.skip("sensitivity", "no labeled images with sensitivity values");
    } else {
        let mut cells = Vec::new();
        for class in SensitivityClass::ALL {
            for level in Likelihood::ALL {
                for label in [PrivacyLabel::Private, PrivacyLabel::Public] {
                    cells.push(json!({
                        "class": class.name(),
                        "level": level.token(),
                        "label": label.to_string(),
                        "count": dist.count(class, level, label),
                        "share": dist.share(class, level, label),
                    }));
                }
            }
        }
        let conditionals: Vec<_> = SensitivityClass::ALL
            .into_iter()
            .map(|c| (c, private_prob_given_sensitivity(ds, c)))
            .collect();
        let cond_json: serde_json::Map<String, serde_json::Value> = conditionals
            .iter()
            .map(|(c, rows)| (c.name().to_string(), json!(rows)))
            .collect();
        let body = json!({ "distribution": cells, "p_private_given_level": cond_json });
        emit(out, "sensitivity", &body, sensitivity_csv(&dist), summary)?;
        write_file(&out.join("sensitivity_conditional.csv"), conditional_csv(&conditionals))?;
    }

    let cells = group_privacy_probabilities(ds, t);
    if cells.iter().all(|c| c.count == 0) {
        summary.skip("groups", "no labeled images with features");
    } else {
        emit(out, "groups", &cells, groups_csv(&cells), summary)?;
    }
    Ok(())
}

/// Writes each analysis as JSON and CSV under `<out_dir>/analysis`.
///
/// Analyses whose inputs are not configured are skipped with a warning. An
/// annotations file with no votes is an error.
pub fn cmd_analyze(cfg: &ExperimentConfig) -> Result<AnalysisSummary, ExperimentError> {
    cfg.validate_for_analysis()?;
    let ds = load_dataset(cfg, false, true)?;
    let out: PathBuf = cfg.out_dir.join("analysis");
    let mut summary = AnalysisSummary::default();

    if cfg.data.annotations.is_some() {
        if ds.annotations.is_empty() {
            return Err(AnalysisError::EmptyDataset.into());
        }
        vote_analyses(&ds, &out, &mut summary)?;
    } else {
        summary.skip("controversial", "no annotations configured");
        summary.skip("people_breakdown", "no annotations configured");
    }

    if cfg.data.privacy_features.is_some() {
        feature_analyses(&ds, cfg, &out, &mut summary)?;
    } else {
        for name in ["cumulative_private_by_people", "sensitivity", "groups"] {
            summary.skip(name, "no privacy features configured");
        }
    }
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}
