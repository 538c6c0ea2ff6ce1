use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::gradcheck::Differentiable;
use super::{
    check_training_inputs, epoch_batches, logit_gradient, rng_for, sample_weights, select_rows,
    sigmoid, weighted_bce, ClassifierError, EarlyStopper, EpochLoss, TrainConfig, Trained,
    Validation,
};
use crate::feature_model::{FeatureMatrix, FeatureSpec, LabelVector, StandardizationParams};

/// Binary logistic regression over standardized features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    pub weights: Array1<f64>,
    pub bias: f64,
    pub standardizer: StandardizationParams,
    /// Set when the model was trained on an assembled feature layout.
    #[serde(default)]
    pub feature_spec: Option<FeatureSpec>,
}

impl LogRegModel {
    pub fn zeros(dim: usize) -> Self {
        LogRegModel {
            weights: Array1::zeros(dim),
            bias: 0.0,
            standardizer: StandardizationParams::identity(dim),
            feature_spec: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    fn logits(&self, x: ArrayView2<f64>) -> Array1<f64> {
        x.dot(&self.weights) + self.bias
    }

    pub fn predict_proba(&self, x: &FeatureMatrix) -> Result<Array1<f64>, ClassifierError> {
        if x.ncols() != self.dim() {
            return Err(ClassifierError::DimensionMismatch {
                expected: self.dim(),
                found: x.ncols(),
            });
        }
        let xs = self.standardizer.apply(x)?;
        Ok(self.logits(xs.view()).mapv(sigmoid))
    }

    fn objective(&self, x: ArrayView2<f64>, y: ArrayView1<f64>, w: ArrayView1<f64>, l2: f64) -> f64 {
        weighted_bce(self.logits(x).view(), y, w) + 0.5 * l2 * self.weights.dot(&self.weights)
    }
}

impl Differentiable for LogRegModel {
    fn parameters(&self) -> Vec<f64> {
        let mut p = self.weights.to_vec();
        p.push(self.bias);
        p
    }

    fn set_parameters(&mut self, params: &[f64]) {
        let d = self.dim();
        self.weights.assign(&ArrayView1::from(&params[..d]));
        self.bias = params[d];
    }

    fn loss(&self, x: ArrayView2<f64>, y: ArrayView1<f64>, w: ArrayView1<f64>, l2: f64) -> f64 {
        self.objective(x, y, w, l2)
    }

    fn loss_and_gradient(
        &self,
        x: ArrayView2<f64>,
        y: ArrayView1<f64>,
        w: ArrayView1<f64>,
        l2: f64,
    ) -> (f64, Vec<f64>) {
        let z = self.logits(x);
        let loss = weighted_bce(z.view(), y, w) + 0.5 * l2 * self.weights.dot(&self.weights);
        let g = logit_gradient(z.view(), y, w);
        let gw = x.t().dot(&g) + l2 * &self.weights;
        let mut grad = gw.to_vec();
        grad.push(g.sum());
        (loss, grad)
    }
}

/// Trains a logistic regression from zero initialization by gradient descent.
pub fn train_logreg(
    x: &FeatureMatrix,
    y: &LabelVector,
    cfg: &TrainConfig,
    validation: Option<Validation<'_>>,
) -> Result<Trained<LogRegModel>, ClassifierError> {
    check_training_inputs(x, y, cfg)?;
    let standardizer = if cfg.standardize {
        StandardizationParams::fit(x)?
    } else {
        StandardizationParams::identity(x.ncols())
    };
    let xs = standardizer.apply(x)?;
    let sw = sample_weights(y, cfg.class_weighting)?;
    let val = match validation {
        Some(v) => {
            if v.x.ncols() != x.ncols() || v.x.nrows() != v.y.len() {
                return Err(ClassifierError::Shape("validation data shape mismatch".into()));
            }
            let vw = sample_weights(v.y, cfg.class_weighting)
                .or_else(|_| sample_weights(v.y, super::ClassWeighting::None))?;
            Some((standardizer.apply(v.x)?, v.y.clone(), vw))
        }
        None => None,
    };

    let mut model = LogRegModel {
        standardizer: standardizer.clone(),
        ..LogRegModel::zeros(x.ncols())
    };
    let mut rng = rng_for(cfg.seed);
    let mut stopper = EarlyStopper::new(cfg.early_stop_patience);
    let mut trace = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        for batch in epoch_batches(xs.nrows(), cfg.batch_size, &mut rng) {
            let (_, grad) = if batch.len() == xs.nrows() {
                model.loss_and_gradient(xs.view(), y.view(), sw.view(), cfg.l2_penalty)
            } else {
                let xb = select_rows(xs.view(), &batch);
                let yb = y.select(ndarray::Axis(0), &batch);
                let wb = sw.select(ndarray::Axis(0), &batch);
                model.loss_and_gradient(xb.view(), yb.view(), wb.view(), cfg.l2_penalty)
            };
            let d = model.dim();
            model
                .weights
                .scaled_add(-cfg.learning_rate, &ArrayView1::from(&grad[..d]));
            model.bias -= cfg.learning_rate * grad[d];
        }
        let train_loss = model.objective(xs.view(), y.view(), sw.view(), cfg.l2_penalty);
        if !train_loss.is_finite() {
            return Err(ClassifierError::NonFiniteLoss { epoch });
        }
        let val_loss = val
            .as_ref()
            .map(|(vx, vy, vw)| model.objective(vx.view(), vy.view(), vw.view(), cfg.l2_penalty));
        trace.push(EpochLoss {
            epoch,
            train_loss,
            val_loss,
        });
        if let Some(vl) = val_loss {
            if stopper.observe(vl, &(model.weights.clone(), model.bias)) {
                break;
            }
        }
    }
    if let Some((w, b)) = stopper.into_best() {
        model.weights = w;
        model.bias = b;
    }
    Ok(Trained { model, trace })
}
