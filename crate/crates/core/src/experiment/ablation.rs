use std::fmt::Write as _;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{AblationRow, ExperimentConfig};
use super::train::{evaluate_split, fit, load_dataset};
use super::ExperimentError;
use crate::data_io::{DataError, Dataset, Split};
use crate::feature_model::{FeatureGroup, FeatureGroups};
use crate::metrics::MetricsReport;

/// One trained and evaluated ablation row. `error` is set when the row failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub id: String,
    pub groups: FeatureGroups,
    pub deep_source_tag: Option<String>,
    pub val: Option<MetricsReport>,
    pub test: Option<MetricsReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct AblationOutcome {
    pub rows: Vec<AblationResult>,
    pub text_path: PathBuf,
    pub csv_path: PathBuf,
}

impl AblationOutcome {
    pub fn n_failed(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }
}

fn groups_of(names: &[FeatureGroup]) -> FeatureGroups {
    names.iter().copied().collect()
}

/// The fifteen feature-subset rows of the classic LogReg comparison, with
/// `deep_tags` naming three deep stores from smallest to largest backbone.
pub fn table1_layout(deep_tags: [&str; 3]) -> Vec<AblationRow> {
    use FeatureGroup::*;
    let mut rows: Vec<(Vec<FeatureGroup>, Option<&str>)> = vec![(vec![Sens], None), (vec![Places], None)];
    rows.extend(deep_tags.iter().map(|t| (vec![Deep], Some(*t))));
    rows.extend([
        (vec![Sens, People], None),
        (vec![People, Out], None),
        (vec![People, Places], None),
        (vec![Sens, People, Out], None),
        (vec![Sens, People, Places], None),
        (vec![People, Out, Places], None),
        (vec![Sens, People, Out, Places], None),
    ]);
    rows.extend(deep_tags.iter().map(|t| (vec![Sens, People, Out, Deep], Some(*t))));
    rows.into_iter()
        .map(|(names, tag)| {
            let groups = groups_of(&names);
            let mut id: Vec<String> = groups
                .iter()
                .filter(|g| *g != Deep)
                .map(|g| g.name().to_ascii_lowercase())
                .collect();
            if let Some(t) = tag {
                id.push(t.to_string());
            }
            AblationRow {
                id: id.join("-"),
                groups,
                deep_source_tag: tag.map(str::to_string),
            }
        })
        .collect()
}

fn optional_test(
    ds: &Dataset,
    model: &crate::classifiers::Classifier,
    threshold: f64,
) -> Result<Option<MetricsReport>, ExperimentError> {
    match evaluate_split(ds, model, Split::Test, threshold) {
        Ok(m) => Ok(Some(m)),
        Err(ExperimentError::Data(DataError::EmptySelection)) => {
            log::warn!("test split is empty; no test metrics");
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

fn run_row(ds: &Dataset, cfg: &ExperimentConfig, row: &AblationRow) -> AblationResult {
    let tag = row
        .deep_source_tag
        .as_deref()
        .or(cfg.features.deep_source_tag.as_deref());
    let outcome = fit(ds, cfg, row.groups, tag).and_then(|f| {
        let test = optional_test(ds, &f.model, cfg.model.threshold)?;
        Ok((f.val_metrics, test))
    });
    let mut result = AblationResult {
        id: row.id.clone(),
        groups: row.groups,
        deep_source_tag: row.groups.contains(FeatureGroup::Deep).then(|| tag.map(str::to_string)).flatten(),
        val: None,
        test: None,
        error: None,
    };
    match outcome {
        Ok((val, test)) => {
            result.val = val;
            result.test = test;
        }
        Err(e) => {
            log::warn!("ablation row '{}' failed: {e}", row.id);
            result.error = Some(e.to_string());
        }
    }
    result
}

const CHECK: &str = "✓";

fn pct(m: Option<&MetricsReport>, f: impl Fn(&MetricsReport) -> Option<f64>) -> String {
    m.and_then(f)
        .map_or_else(|| "n/a".to_string(), |v| format!("{:.2}", 100.0 * v))
}

/// Aligned text table: group columns, then BA and F1 (percent) on the val
/// and test splits.
pub fn ablation_text(rows: &[AblationResult]) -> String {
    let id_w = rows.iter().map(|r| r.id.chars().count()).max().unwrap_or(0).max(3);
    let deep_w = rows
        .iter()
        .filter_map(|r| r.deep_source_tag.as_ref().map(|t| t.chars().count()))
        .max()
        .unwrap_or(0)
        .max(4);
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<id_w$}  {:^4}  {:^6}  {:^3}  {:^6}  {:^deep_w$}  {:>7}  {:>7}  {:>7}  {:>7}",
        "row", "Sens", "People", "Out", "Places", "Deep", "val BA", "val F1", "test BA", "test F1"
    );
    let mark = |r: &AblationResult, g: FeatureGroup| if r.groups.contains(g) { CHECK } else { "" };
    for r in rows {
        let deep = match (&r.deep_source_tag, r.groups.contains(FeatureGroup::Deep)) {
            (Some(t), _) => t.as_str(),
            (None, true) => CHECK,
            (None, false) => "",
        };
        let _ = write!(
            s,
            "{:<id_w$}  {:^4}  {:^6}  {:^3}  {:^6}  {:^deep_w$}",
            r.id,
            mark(r, FeatureGroup::Sens),
            mark(r, FeatureGroup::People),
            mark(r, FeatureGroup::Out),
            mark(r, FeatureGroup::Places),
            deep,
        );
        if r.error.is_some() {
            s.push_str("  failed\n");
            continue;
        }
        let _ = writeln!(
            s,
            "  {:>7}  {:>7}  {:>7}  {:>7}",
            pct(r.val.as_ref(), |m| m.balanced_accuracy),
            pct(r.val.as_ref(), |m| Some(m.f1)),
            pct(r.test.as_ref(), |m| m.balanced_accuracy),
            pct(r.test.as_ref(), |m| Some(m.f1)),
        );
    }
    for r in rows {
        if let Some(e) = &r.error {
            let _ = writeln!(s, "{}: {e}", r.id);
        }
    }
    s
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// CSV with 0/1 group columns and raw metric fractions.
pub fn ablation_csv(rows: &[AblationResult]) -> String {
    let mut s = String::from("row,sens,people,out,places,deep,val_ba,val_f1,test_ba,test_f1,error\n");
    let num = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        let flag = |g| if r.groups.contains(g) { "1" } else { "0" };
        let deep = match (&r.deep_source_tag, r.groups.contains(FeatureGroup::Deep)) {
            (Some(t), _) => t.clone(),
            (None, true) => "1".into(),
            (None, false) => String::new(),
        };
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            csv_field(&r.id),
            flag(FeatureGroup::Sens),
            flag(FeatureGroup::People),
            flag(FeatureGroup::Out),
            flag(FeatureGroup::Places),
            csv_field(&deep),
            num(r.val.as_ref().and_then(|m| m.balanced_accuracy)),
            num(r.val.as_ref().map(|m| m.f1)),
            num(r.test.as_ref().and_then(|m| m.balanced_accuracy)),
            num(r.test.as_ref().map(|m| m.f1)),
            csv_field(r.error.as_deref().unwrap_or("")),
        );
    }
    s
}

/// Trains and evaluates every `[[ablation]]` row on up to `workers` threads.
/// A failing row is recorded and the others proceed. Writes `ablation.txt`
/// and `ablation.csv` under the output directory.
pub fn cmd_ablate(cfg: &ExperimentConfig, workers: usize) -> Result<AblationOutcome, ExperimentError> {
    cfg.validate_for_ablation()?;
    let ds = load_dataset(cfg, true, false)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| ExperimentError::Io {
            path: cfg.out_dir.clone(),
            source: std::io::Error::other(e),
        })?;
    let rows: Vec<AblationResult> =
        pool.install(|| cfg.ablation.par_iter().map(|row| run_row(&ds, cfg, row)).collect());
    let text_path = cfg.out_dir.join("ablation.txt");
    let csv_path = cfg.out_dir.join("ablation.csv");
    crate::data_io::write_file(&text_path, ablation_text(&rows))?;
    crate::data_io::write_file(&csv_path, ablation_csv(&rows))?;
    Ok(AblationOutcome {
        rows,
        text_path,
        csv_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table1_has_fifteen_unique_rows() {
        let rows = table1_layout(["rn18", "rn50", "rn101"]);
        assert_eq!(rows.len(), 15);
        let ids: std::collections::HashSet<_> = rows.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids.len(), 15);
        assert_eq!(rows[0].id, "sens");
        assert_eq!(rows[4].id, "rn101");
        assert_eq!(rows[11].id, "sens-people-out-places");
        assert_eq!(rows[14].id, "sens-people-out-rn101");
        assert!(rows[14].groups.contains(FeatureGroup::Deep));
    }

    #[test]
    fn tables_mark_groups_in_column_order() {
        let report = MetricsReport::from_counts(crate::metrics::ConfusionCounts::new(1, 0, 1, 0)).unwrap();
        let rows = vec![
            AblationResult {
                id: "a".into(),
                groups: "Sens+Out".parse().unwrap(),
                deep_source_tag: None,
                val: Some(report.clone()),
                test: Some(report),
                error: None,
            },
            AblationResult {
                id: "b".into(),
                groups: "Deep".parse().unwrap(),
                deep_source_tag: Some("rn50".into()),
                val: None,
                test: None,
                error: Some("boom, bad".into()),
            },
        ];
        let csv = ablation_csv(&rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[1], "a,1,0,1,0,,1,1,1,1,");
        assert_eq!(lines[2], "b,0,0,0,0,rn50,,,,,\"boom, bad\"");
        let text = ablation_text(&rows);
        assert!(text.lines().next().unwrap().starts_with("row  Sens  People  Out  Places"));
        assert!(text.contains("100.00"));
        assert!(text.contains("failed"));
        assert!(text.contains("b: boom, bad"));
    }
}
