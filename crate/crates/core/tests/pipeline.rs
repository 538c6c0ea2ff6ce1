mod common;

use std::path::Path;

use common::*;
use privlens::classifiers::{save_model, Classifier, LogRegModel};
use privlens::data_io::Split;
use privlens::experiment::{
    cmd_ablate, cmd_evaluate, cmd_train, load_dataset, AblationRow, ExperimentConfig,
    ExperimentError,
};
use privlens::feature_model::{FeatureGroups, FeatureSpec};

fn config(dir: &Path, extra: &str) -> ExperimentConfig {
    let path = write(dir, "exp.toml", &base_config(extra));
    ExperimentConfig::load(&path).unwrap()
}

fn save(dir: &Path, mut model: LogRegModel, groups: &str) -> std::path::PathBuf {
    model.feature_spec = Some(FeatureSpec::new(groups.parse().unwrap()));
    let path = dir.join("hand_model.json");
    save_model(&Classifier::Logreg(model), &path).unwrap();
    path
}

/// Ten test images, two of them private; the adult level marks them.
fn eighty_twenty(dir: &Path) {
    let mut m = String::from("image_id,label,split\n");
    let mut p = String::from(
        "image_id,adult,racy,medical,spoofed,violent,people_prob,people_count,outdoor_prob\n",
    );
    for i in 0..10 {
        let private = i < 2;
        m.push_str(&format!("t{i},{},test\n", if private { "private" } else { "public" }));
        let adult = if private { "VERY_LIKELY" } else { "VERY_UNLIKELY" };
        p.push_str(&format!(
            "t{i},{adult},UNLIKELY,UNLIKELY,UNLIKELY,UNLIKELY,0.5,1,0.5\n"
        ));
    }
    write(dir, "manifest.csv", &m);
    write(dir, "privacy_features.csv", &p);
    write(dir, "rn18.csv", "#source_tag=rn18,dim=1\nimage_id,v0\n");
}

#[test]
fn perfect_model_scores_one() {
    let dir = tempfile::tempdir().unwrap();
    eighty_twenty(dir.path());
    let cfg = config(dir.path(), "");
    let mut model = LogRegModel::zeros(8);
    model.weights[0] = 20.0;
    model.bias = -10.0;
    let path = save(dir.path(), model, "Sens+People+Out");
    let m = cmd_evaluate(&cfg, &path).unwrap().metrics;
    assert_eq!(m.balanced_accuracy, Some(1.0));
    assert_eq!(m.f1, 1.0);
    assert_eq!(m.unweighted_accuracy, 1.0);
}

#[test]
fn majority_class_predictor() {
    let dir = tempfile::tempdir().unwrap();
    eighty_twenty(dir.path());
    let cfg = config(dir.path(), "");
    let mut model = LogRegModel::zeros(8);
    model.bias = -5.0;
    let path = save(dir.path(), model, "Sens+People+Out");
    let m = cmd_evaluate(&cfg, &path).unwrap().metrics;
    assert!((m.unweighted_accuracy - 0.8).abs() < 1e-12);
    assert!((m.balanced_accuracy.unwrap() - 0.5).abs() < 1e-12);
    assert_eq!(m.f1, 0.0);
}

#[test]
fn evaluating_without_required_features_is_a_spec_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    eighty_twenty(dir.path());
    let path = save(dir.path(), LogRegModel::zeros(5), "Sens");
    let mut cfg = config(dir.path(), "");
    cfg.data.privacy_features = None;
    let err = cmd_evaluate(&cfg, &path).unwrap_err();
    assert!(matches!(err, ExperimentError::FeatureSpecMismatch(_)), "{err}");
    assert_eq!(err.exit_code(), 78);

    let deep = save(dir.path(), LogRegModel::zeros(3), "Deep");
    let mut spec_model = privlens::classifiers::load_model(&deep).unwrap();
    spec_model.set_feature_spec(FeatureSpec::new("Deep".parse().unwrap()).with_deep("rn18", 3));
    save_model(&spec_model, &deep).unwrap();
    let err = cmd_evaluate(&config(dir.path(), ""), &deep).unwrap_err();
    assert!(matches!(err, ExperimentError::FeatureSpecMismatch(_)), "{err}");
}

#[test]
fn ablation_row_matches_standalone_run() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), &synthetic_images(400, 8, 0.1));
    let mut cfg = config(dir.path(), "");
    cfg.ablation = vec![
        AblationRow {
            id: "out".into(),
            groups: "Out".parse().unwrap(),
            deep_source_tag: None,
        },
        AblationRow {
            id: "privacy".into(),
            groups: FeatureGroups::PRIVACY,
            deep_source_tag: None,
        },
    ];
    let ablation = cmd_ablate(&cfg, 2).unwrap();
    let row = &ablation.rows[1];
    assert!(row.error.is_none());

    let trained = cmd_train(&cfg).unwrap();
    let evaluated = cmd_evaluate(&cfg, &trained.model_path).unwrap();
    assert_eq!(row.val.as_ref(), trained.val_metrics.as_ref());
    assert_eq!(row.test.as_ref(), Some(&evaluated.metrics));
}

#[test]
fn manifest_order_permutes_rows_and_labels_together() {
    let dir = tempfile::tempdir().unwrap();
    let imgs = synthetic_images(30, 2, 0.0);
    write_dataset(dir.path(), &imgs);
    let cfg = config(dir.path(), "");
    let spec = FeatureSpec::new(FeatureGroups::PRIVACY);
    let a = load_dataset(&cfg, true, false)
        .unwrap()
        .build_design_matrix(Some(Split::Train), &spec)
        .unwrap();

    let mut shuffled = imgs.clone();
    shuffled.reverse();
    write(dir.path(), "manifest.csv", &manifest_csv(&shuffled, true));
    let b = load_dataset(&cfg, true, false)
        .unwrap()
        .build_design_matrix(Some(Split::Train), &spec)
        .unwrap();
    let n = a.ids.len();
    assert_eq!(n, b.ids.len());
    for i in 0..n {
        let j = n - 1 - i;
        assert_eq!(a.ids[i], b.ids[j]);
        assert_eq!(a.y[i], b.y[j]);
        assert_eq!(a.x.row(i), b.x.row(j));
    }
}

#[test]
fn mlp_trains_through_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), &synthetic_images(300, 4, 0.1));
    let cfg = config(
        dir.path(),
        "\n[model]\nkind = \"mlp\"\n\n[features]\ngroups = [\"Sens\", \"People\", \"Out\", \"Deep\"]\ndeep_source_tag = \"rn18\"\n",
    );
    let s = cmd_train(&cfg).unwrap();
    assert_eq!(s.model.kind(), "mlp");
    assert_eq!(s.model.input_dim(), 14);
    let e = cmd_evaluate(&cfg, &s.model_path).unwrap();
    assert!(e.metrics.balanced_accuracy.unwrap() > 0.6);
}
