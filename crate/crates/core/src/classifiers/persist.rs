//! Versioned JSON model files.
//!
//! ```json
//! { "schema_version": 1, "model": { "kind": "logreg", "weights": ..., "bias": ...,
//!   "standardizer": { "mean": [...], "stddev": [...] }, "feature_spec": {...} } }
//! ```

use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use super::{Classifier, ClassifierError};

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Serialize)]
struct ModelDocument<'a> {
    schema_version: u64,
    model: &'a Classifier,
}

fn validate(model: &Classifier) -> Result<(), ClassifierError> {
    let (dim, std_dim) = match model {
        Classifier::Logreg(m) => (m.dim(), m.standardizer.dim()),
        Classifier::Mlp(m) => {
            m.validate()?;
            (m.input_dim(), m.standardizer.dim())
        }
    };
    if std_dim != dim {
        return Err(ClassifierError::Shape(format!(
            "standardizer has {std_dim} columns, model expects {dim}"
        )));
    }
    if let Some(spec_dim) = model.feature_spec().and_then(|s| s.dim()) {
        if spec_dim != dim {
            return Err(ClassifierError::DimensionMismatch {
                expected: spec_dim,
                found: dim,
            });
        }
    }
    Ok(())
}

pub fn model_to_json(model: &Classifier) -> Result<String, ClassifierError> {
    validate(model)?;
    let doc = ModelDocument {
        schema_version: SCHEMA_VERSION,
        model,
    };
    let mut s = serde_json::to_string_pretty(&doc).map_err(|e| ClassifierError::Parse(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn model_from_json(text: &str) -> Result<Classifier, ClassifierError> {
    let mut doc: Value = serde_json::from_str(text).map_err(|e| ClassifierError::Parse(e.to_string()))?;
    let version = doc
        .get("schema_version")
        .and_then(Value::as_u64)
        .ok_or_else(|| ClassifierError::Parse("missing schema_version".into()))?;
    if version != SCHEMA_VERSION {
        return Err(ClassifierError::SchemaVersionMismatch {
            found: version,
            expected: SCHEMA_VERSION,
        });
    }
    let model = doc
        .get_mut("model")
        .map(Value::take)
        .ok_or_else(|| ClassifierError::Parse("missing model".into()))?;
    let model: Classifier =
        serde_json::from_value(model).map_err(|e| ClassifierError::Parse(e.to_string()))?;
    validate(&model)?;
    Ok(model)
}

pub fn save_model(model: &Classifier, path: impl AsRef<Path>) -> Result<(), ClassifierError> {
    let path = path.as_ref();
    std::fs::write(path, model_to_json(model)?).map_err(|source| ClassifierError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Classifier, ClassifierError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ClassifierError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    model_from_json(&text)
}
