//! Gradient-trained binary classifiers: logistic regression and a
//! three-hidden-layer ReLU perceptron.
//!
//! Both minimize the (optionally class-weighted) mean binary cross-entropy
//! plus `(l2_penalty / 2) * ||W||^2` over weight matrices (biases are not
//! penalized), using plain full-batch or mini-batch gradient descent.

mod gradcheck;
mod logreg;
mod mlp;
mod persist;

use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feature_model::{FeatureError, FeatureMatrix, FeatureSpec, LabelVector, PrivacyLabel};

pub use gradcheck::{
    central_difference_gradient, check_gradient, relative_error, Differentiable, GradientCheck,
};
pub use logreg::{train_logreg, LogRegModel};
pub use mlp::{train_mlp, DenseLayer, MlpModel, DEEP_HIDDEN_DIMS, PRIVACY_HIDDEN_DIMS};
pub use persist::{load_model, model_to_json, model_from_json, save_model, SCHEMA_VERSION};

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("balanced class weighting needs both classes in the training labels")]
    DegenerateLabels,
    #[error("training diverged: non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("feature dimension mismatch: model expects {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("threshold {0} is outside (0, 1)")]
    InvalidThreshold(f64),
    #[error("model schema version {found} is not supported (expected {expected})")]
    SchemaVersionMismatch { found: u64, expected: u64 },
    #[error("cannot parse model: {0}")]
    Parse(String),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassWeighting {
    None,
    #[default]
    Balanced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2_penalty: f64,
    /// `None` trains full-batch.
    pub batch_size: Option<usize>,
    pub seed: u64,
    pub class_weighting: ClassWeighting,
    /// Stop after this many epochs without validation-loss improvement and
    /// keep the best parameters seen.
    pub early_stop_patience: Option<usize>,
    /// Fit a standardizer on the training matrix; otherwise use identity.
    pub standardize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            epochs: 500,
            l2_penalty: 0.0,
            batch_size: None,
            seed: 0,
            class_weighting: ClassWeighting::Balanced,
            early_stop_patience: None,
            standardize: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(ClassifierError::InvalidConfig(
                "learning_rate must be a positive finite number".into(),
            ));
        }
        if !(self.l2_penalty.is_finite() && self.l2_penalty >= 0.0) {
            return Err(ClassifierError::InvalidConfig(
                "l2_penalty must be non-negative".into(),
            ));
        }
        if self.batch_size == Some(0) {
            return Err(ClassifierError::InvalidConfig("batch_size must be positive".into()));
        }
        if self.early_stop_patience == Some(0) {
            return Err(ClassifierError::InvalidConfig(
                "early_stop_patience must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Loss values recorded after each epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Trained<M> {
    pub model: M,
    pub trace: Vec<EpochLoss>,
}

/// Optional held-out data for early stopping and loss tracing.
#[derive(Debug, Clone, Copy)]
pub struct Validation<'a> {
    pub x: &'a FeatureMatrix,
    pub y: &'a LabelVector,
}

/// A trained model of either kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Classifier {
    Logreg(LogRegModel),
    Mlp(MlpModel),
}

impl Classifier {
    pub fn feature_spec(&self) -> Option<&FeatureSpec> {
        match self {
            Classifier::Logreg(m) => m.feature_spec.as_ref(),
            Classifier::Mlp(m) => m.feature_spec.as_ref(),
        }
    }

    pub fn set_feature_spec(&mut self, spec: FeatureSpec) {
        match self {
            Classifier::Logreg(m) => m.feature_spec = Some(spec),
            Classifier::Mlp(m) => m.feature_spec = Some(spec),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Classifier::Logreg(m) => m.dim(),
            Classifier::Mlp(m) => m.input_dim(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Classifier::Logreg(_) => "logreg",
            Classifier::Mlp(_) => "mlp",
        }
    }

    pub fn predict_proba(&self, x: &FeatureMatrix) -> Result<Array1<f64>, ClassifierError> {
        match self {
            Classifier::Logreg(m) => m.predict_proba(x),
            Classifier::Mlp(m) => m.predict_proba(x),
        }
    }

    pub fn predict_label(
        &self,
        x: &FeatureMatrix,
        threshold: f64,
    ) -> Result<Vec<PrivacyLabel>, ClassifierError> {
        labels_from_proba(&self.predict_proba(x)?, threshold)
    }
}

impl From<LogRegModel> for Classifier {
    fn from(m: LogRegModel) -> Self {
        Classifier::Logreg(m)
    }
}

impl From<MlpModel> for Classifier {
    fn from(m: MlpModel) -> Self {
        Classifier::Mlp(m)
    }
}

/// Private iff probability ≥ threshold (ties go to Private).
pub fn labels_from_proba(
    proba: &Array1<f64>,
    threshold: f64,
) -> Result<Vec<PrivacyLabel>, ClassifierError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(ClassifierError::InvalidThreshold(threshold));
    }
    Ok(proba
        .iter()
        .map(|&p| {
            if p >= threshold {
                PrivacyLabel::Private
            } else {
                PrivacyLabel::Public
            }
        })
        .collect())
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of a logit, `softplus(z) - y z`, stable for large |z|.
pub(crate) fn bce_with_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p() - y * z
}

/// Per-sample loss weights. Balanced weighting gives each class total weight n/2.
pub fn sample_weights(y: &LabelVector, weighting: ClassWeighting) -> Result<Array1<f64>, ClassifierError> {
    match weighting {
        ClassWeighting::None => Ok(Array1::ones(y.len())),
        ClassWeighting::Balanced => {
            let n = y.len() as f64;
            let n_pos = y.iter().filter(|&&v| v >= 0.5).count() as f64;
            let n_neg = n - n_pos;
            if n_pos == 0.0 || n_neg == 0.0 {
                return Err(ClassifierError::DegenerateLabels);
            }
            let (w_pos, w_neg) = (n / (2.0 * n_pos), n / (2.0 * n_neg));
            Ok(y.mapv(|v| if v >= 0.5 { w_pos } else { w_neg }))
        }
    }
}

/// Weighted mean BCE over logits: `sum_i w_i bce(z_i, y_i) / n`.
pub(crate) fn weighted_bce(logits: ArrayView1<f64>, y: ArrayView1<f64>, w: ArrayView1<f64>) -> f64 {
    let n = logits.len() as f64;
    logits
        .iter()
        .zip(y)
        .zip(w)
        .map(|((&z, &t), &wi)| wi * bce_with_logit(z, t))
        .sum::<f64>()
        / n
}

/// Derivative of [`weighted_bce`] with respect to each logit.
pub(crate) fn logit_gradient(logits: ArrayView1<f64>, y: ArrayView1<f64>, w: ArrayView1<f64>) -> Array1<f64> {
    let n = logits.len() as f64;
    ndarray::Zip::from(logits)
        .and(y)
        .and(w)
        .map_collect(|&z, &t, &wi| wi * (sigmoid(z) - t) / n)
}

pub(crate) fn check_training_inputs(
    x: &FeatureMatrix,
    y: &LabelVector,
    cfg: &TrainConfig,
) -> Result<(), ClassifierError> {
    cfg.validate()?;
    if x.nrows() != y.len() {
        return Err(ClassifierError::Shape(format!(
            "{} feature rows but {} labels",
            x.nrows(),
            y.len()
        )));
    }
    if x.nrows() < 2 {
        return Err(ClassifierError::Shape("need at least two training rows".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(FeatureError::NonFinite.into());
    }
    Ok(())
}

/// Row index batches for one epoch; shuffled when mini-batching.
pub(crate) fn epoch_batches(n: usize, batch_size: Option<usize>, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    match batch_size {
        None => vec![(0..n).collect()],
        Some(b) if b >= n => vec![(0..n).collect()],
        Some(b) => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(rng);
            idx.chunks(b).map(<[usize]>::to_vec).collect()
        }
    }
}

pub(crate) fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub(crate) fn select_rows(x: ArrayView2<f64>, rows: &[usize]) -> FeatureMatrix {
    x.select(ndarray::Axis(0), rows)
}

/// Tracks the best validation loss for early stopping.
pub(crate) struct EarlyStopper<P> {
    patience: Option<usize>,
    best: Option<(f64, P)>,
    stale: usize,
}

impl<P: Clone> EarlyStopper<P> {
    pub(crate) fn new(patience: Option<usize>) -> Self {
        EarlyStopper {
            patience,
            best: None,
            stale: 0,
        }
    }

    /// Records a validation loss; returns true when training should stop.
    pub(crate) fn observe(&mut self, val_loss: f64, params: &P) -> bool {
        let Some(patience) = self.patience else {
            return false;
        };
        match &self.best {
            Some((best, _)) if val_loss >= *best => {
                self.stale += 1;
                self.stale >= patience
            }
            _ => {
                self.best = Some((val_loss, params.clone()));
                self.stale = 0;
                false
            }
        }
    }

    pub(crate) fn into_best(self) -> Option<P> {
        self.patience.and(self.best.map(|(_, p)| p))
    }
}
