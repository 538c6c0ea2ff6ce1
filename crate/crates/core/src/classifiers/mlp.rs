use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gradcheck::Differentiable;
use super::{
    check_training_inputs, epoch_batches, logit_gradient, rng_for, sample_weights, select_rows,
    sigmoid, weighted_bce, ClassWeighting, ClassifierError, EarlyStopper, EpochLoss, TrainConfig,
    Trained, Validation,
};
use crate::feature_model::{FeatureMatrix, FeatureSpec, LabelVector, StandardizationParams};

/// Default widths for high-dimensional deep-feature inputs.
pub const DEEP_HIDDEN_DIMS: [usize; 3] = [256, 128, 64];
/// Default widths for the eight privacy features alone.
pub const PRIVACY_HIDDEN_DIMS: [usize; 3] = [16, 16, 8];

/// Fully connected layer; `weights` is `inputs × outputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl DenseLayer {
    /// Uniform He-style initialization, `U(-sqrt(6/fan_in), sqrt(6/fan_in))`, zero bias.
    fn init(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / inputs as f64).sqrt();
        DenseLayer {
            weights: Array2::from_shape_fn((inputs, outputs), |_| rng.random_range(-limit..limit)),
            bias: Array1::zeros(outputs),
        }
    }

    fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.weights) + &self.bias
    }
}

/// Three ReLU hidden layers followed by a single-logit output layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub layers: Vec<DenseLayer>,
    pub standardizer: StandardizationParams,
    #[serde(default)]
    pub feature_spec: Option<FeatureSpec>,
}

struct ForwardPass {
    /// Layer inputs: the features, then each hidden activation.
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of every layer.
    pre: Vec<Array2<f64>>,
}

impl ForwardPass {
    fn logits(&self) -> ArrayView1<'_, f64> {
        self.pre.last().expect("at least one layer").column(0)
    }
}

impl MlpModel {
    pub fn init(input_dim: usize, hidden: &[usize], seed: u64) -> Result<Self, ClassifierError> {
        if hidden.len() != 3 {
            return Err(ClassifierError::Shape(format!(
                "expected exactly three hidden layers, got {}",
                hidden.len()
            )));
        }
        if input_dim == 0 || hidden.contains(&0) {
            return Err(ClassifierError::Shape("layer widths must be positive".into()));
        }
        let mut rng = rng_for(seed);
        let dims: Vec<usize> = std::iter::once(input_dim)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(1))
            .collect();
        let layers = dims
            .windows(2)
            .map(|w| DenseLayer::init(w[0], w[1], &mut rng))
            .collect();
        Ok(MlpModel {
            layers,
            standardizer: StandardizationParams::identity(input_dim),
            feature_spec: None,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    pub fn hidden_dims(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(|l| l.weights.ncols())
            .collect()
    }

    /// Checks layer count and that consecutive shapes chain.
    pub fn validate(&self) -> Result<(), ClassifierError> {
        if self.layers.len() != 4 {
            return Err(ClassifierError::Shape(format!(
                "expected 3 hidden layers plus output, found {} layers",
                self.layers.len()
            )));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.bias.len() != l.weights.ncols() {
                return Err(ClassifierError::Shape(format!("layer {i}: bias length mismatch")));
            }
            if let Some(next) = self.layers.get(i + 1) {
                if next.weights.nrows() != l.weights.ncols() {
                    return Err(ClassifierError::Shape(format!(
                        "layer {i} outputs {} but layer {} expects {}",
                        l.weights.ncols(),
                        i + 1,
                        next.weights.nrows()
                    )));
                }
            }
        }
        if self.layers[3].weights.ncols() != 1 {
            return Err(ClassifierError::Shape("output layer must produce one logit".into()));
        }
        if self.standardizer.dim() != self.input_dim() {
            return Err(ClassifierError::Shape("standardizer dimension mismatch".into()));
        }
        Ok(())
    }

    fn forward(&self, x: ArrayView2<f64>) -> ForwardPass {
        let last = self.layers.len() - 1;
        let mut inputs = vec![x.to_owned()];
        let mut pre = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let a = layer.forward(inputs[i].view());
            if i < last {
                inputs.push(a.mapv(|v| v.max(0.0)));
            }
            pre.push(a);
        }
        ForwardPass { inputs, pre }
    }

    fn penalty(&self, l2: f64) -> f64 {
        0.5 * l2
            * self
                .layers
                .iter()
                .map(|l| l.weights.iter().map(|w| w * w).sum::<f64>())
                .sum::<f64>()
    }

    fn objective(&self, x: ArrayView2<f64>, y: ArrayView1<f64>, w: ArrayView1<f64>, l2: f64) -> f64 {
        weighted_bce(self.forward(x).logits(), y, w) + self.penalty(l2)
    }

    /// Per-layer (weight, bias) gradients by backpropagation.
    fn backward(
        &self,
        pass: &ForwardPass,
        y: ArrayView1<f64>,
        w: ArrayView1<f64>,
        l2: f64,
    ) -> Vec<(Array2<f64>, Array1<f64>)> {
        let dz = logit_gradient(pass.logits(), y, w);
        let mut delta = dz.insert_axis(Axis(1));
        let mut grads = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let gw = pass.inputs[i].t().dot(&delta) + l2 * &layer.weights;
            let gb = delta.sum_axis(Axis(0));
            if i > 0 {
                let mut back = delta.dot(&layer.weights.t());
                ndarray::Zip::from(&mut back)
                    .and(&pass.pre[i - 1])
                    .for_each(|d, &a| {
                        if a <= 0.0 {
                            *d = 0.0
                        }
                    });
                delta = back;
            }
            grads.push((gw, gb));
        }
        grads.reverse();
        grads
    }

    pub fn predict_proba(&self, x: &FeatureMatrix) -> Result<Array1<f64>, ClassifierError> {
        if x.ncols() != self.input_dim() {
            return Err(ClassifierError::DimensionMismatch {
                expected: self.input_dim(),
                found: x.ncols(),
            });
        }
        let xs = self.standardizer.apply(x)?;
        Ok(self.forward(xs.view()).logits().mapv(sigmoid))
    }

    fn step(&mut self, grads: &[(Array2<f64>, Array1<f64>)], lr: f64) {
        for (layer, (gw, gb)) in self.layers.iter_mut().zip(grads) {
            layer.weights.scaled_add(-lr, gw);
            layer.bias.scaled_add(-lr, gb);
        }
    }
}

impl Differentiable for MlpModel {
    fn parameters(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
            .collect()
    }

    fn set_parameters(&mut self, params: &[f64]) {
        let mut offset = 0;
        for l in &mut self.layers {
            for v in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *v = params[offset];
                offset += 1;
            }
        }
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
        let pass = self.forward(x);
        let loss = weighted_bce(pass.logits(), y, w) + self.penalty(l2);
        let grad = self
            .backward(&pass, y, w, l2)
            .iter()
            .flat_map(|(gw, gb)| gw.iter().chain(gb.iter()).copied().collect::<Vec<_>>())
            .collect();
        (loss, grad)
    }
}

/// Trains a three-hidden-layer ReLU network by backpropagation.
pub fn train_mlp(
    x: &FeatureMatrix,
    y: &LabelVector,
    cfg: &TrainConfig,
    hidden_dims: &[usize],
    validation: Option<Validation<'_>>,
) -> Result<Trained<MlpModel>, ClassifierError> {
    check_training_inputs(x, y, cfg)?;
    let mut model = MlpModel::init(x.ncols(), hidden_dims, cfg.seed)?;
    let standardizer = if cfg.standardize {
        StandardizationParams::fit(x)?
    } else {
        StandardizationParams::identity(x.ncols())
    };
    let xs = standardizer.apply(x)?;
    model.standardizer = standardizer;
    let sw = sample_weights(y, cfg.class_weighting)?;
    let val = match validation {
        Some(v) => {
            if v.x.ncols() != x.ncols() || v.x.nrows() != v.y.len() {
                return Err(ClassifierError::Shape("validation data shape mismatch".into()));
            }
            let vw = sample_weights(v.y, cfg.class_weighting)
                .or_else(|_| sample_weights(v.y, ClassWeighting::None))?;
            Some((model.standardizer.apply(v.x)?, v.y.clone(), vw))
        }
        None => None,
    };

    // Batch shuffling draws from a stream separate from initialization.
    let mut rng = rng_for(cfg.seed.wrapping_add(1));
    let mut stopper = EarlyStopper::new(cfg.early_stop_patience);
    let mut trace = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        for batch in epoch_batches(xs.nrows(), cfg.batch_size, &mut rng) {
            let grads = if batch.len() == xs.nrows() {
                let pass = model.forward(xs.view());
                model.backward(&pass, y.view(), sw.view(), cfg.l2_penalty)
            } else {
                let xb = select_rows(xs.view(), &batch);
                let yb = y.select(Axis(0), &batch);
                let wb = sw.select(Axis(0), &batch);
                let pass = model.forward(xb.view());
                model.backward(&pass, yb.view(), wb.view(), cfg.l2_penalty)
            };
            model.step(&grads, cfg.learning_rate);
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
            if stopper.observe(vl, &model.layers) {
                break;
            }
        }
    }
    if let Some(layers) = stopper.into_best() {
        model.layers = layers;
    }
    Ok(Trained { model, trace })
}
