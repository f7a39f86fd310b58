use serde::{Deserialize, Serialize};

use super::{check_dim, class_weights, sigmoid, ModelError, TrainConfig};
use crate::corpus::FeatureMatrix;
use crate::rng::{rng_from_seed, shuffle, Gaussian};

/// Fully connected layer, `out = W in + b`, `W` stored row-major
/// (`n_out x n_in`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub n_in: usize,
    pub n_out: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

/// Feed-forward membership classifier: ReLU hidden layers and a single
/// logistic output unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub layers: Vec<DenseLayer>,
}

/// Gradient with the same shape as the model's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradient {
    pub layers: Vec<LayerGradient>,
    /// Loss of the batch the gradient was taken on.
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

/// Rows of a feature matrix with their targets, per-example loss weights and
/// the L2 coefficient on the weight matrices.
#[derive(Debug, Clone, Copy)]
pub struct Minibatch<'a> {
    pub features: &'a FeatureMatrix,
    pub rows: &'a [usize],
    /// Targets in [0, 1], one per entry of `rows`.
    pub targets: &'a [f64],
    /// Per-example loss weights (all ones when `None`).
    pub weights: Option<&'a [f64]>,
    pub l2: f64,
}

impl MlpModel {
    /// Layer sizes `[d, h_1, ..., 1]`.
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.layers[0].n_in];
        sizes.extend(self.layers.iter().map(|l| l.n_out));
        sizes
    }

    pub fn dim(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self, ModelError> {
        validate_sizes(sizes)?;
        Ok(MlpModel {
            layers: sizes
                .windows(2)
                .map(|p| DenseLayer {
                    n_in: p[0],
                    n_out: p[1],
                    w: vec![0.0; p[0] * p[1]],
                    b: vec![0.0; p[1]],
                })
                .collect(),
        })
    }

    /// He-normal hidden layers, Glorot-style output layer, zero biases.
    pub fn init(sizes: &[usize], seed: u64) -> Result<Self, ModelError> {
        let mut model = Self::zeros(sizes)?;
        let mut rng = rng_from_seed(seed);
        let mut g = Gaussian::new();
        let last = model.layers.len() - 1;
        for (l, layer) in model.layers.iter_mut().enumerate() {
            let gain = if l == last { 1.0 } else { 2.0 };
            let sd = (gain / layer.n_in as f64).sqrt();
            for w in layer.w.iter_mut() {
                *w = g.sample(&mut rng) * sd;
            }
        }
        Ok(model)
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.w.iter().chain(l.b.iter()))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.w.iter_mut().chain(l.b.iter_mut()))
    }

    /// Output logit for one row; `trace` receives each layer's
    /// pre-activations when given.
    fn forward(&self, x: &FeatureMatrix, row: usize, mut trace: Option<&mut Vec<Vec<f64>>>) -> f64 {
        let input = x.row(row);
        let first = &self.layers[0];
        let mut z: Vec<f64> = (0..first.n_out)
            .map(|o| input.dot(&first.w[o * first.n_in..(o + 1) * first.n_in]) + first.b[o])
            .collect();
        for layer in &self.layers[1..] {
            let a: Vec<f64> = z.iter().map(|&v| v.max(0.0)).collect();
            if let Some(t) = trace.as_deref_mut() {
                t.push(std::mem::take(&mut z));
            }
            z = (0..layer.n_out)
                .map(|o| {
                    let w = &layer.w[o * layer.n_in..(o + 1) * layer.n_in];
                    w.iter().zip(&a).map(|(w, a)| w * a).sum::<f64>() + layer.b[o]
                })
                .collect();
        }
        if let Some(t) = trace {
            t.push(z.clone());
        }
        z[0]
    }

    pub fn logit(&self, x: &FeatureMatrix, row: usize) -> f64 {
        self.forward(x, row, None)
    }

    pub fn logits(&self, x: &FeatureMatrix) -> Result<Vec<f64>, ModelError> {
        check_dim(self.dim(), x)?;
        Ok((0..x.n_rows()).map(|i| self.logit(x, i)).collect())
    }

    fn weight_sq_norm(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.w.iter())
            .map(|w| w * w)
            .sum()
    }
}

fn validate_sizes(sizes: &[usize]) -> Result<(), ModelError> {
    if sizes.len() < 3 {
        return Err(ModelError::InvalidConfig(
            "an MLP needs at least one hidden layer; use the linear SVM otherwise".into(),
        ));
    }
    if *sizes.last().unwrap() != 1 {
        return Err(ModelError::InvalidConfig("the output layer must have one unit".into()));
    }
    if sizes.contains(&0) {
        return Err(ModelError::InvalidConfig("layer sizes must be positive".into()));
    }
    Ok(())
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Weighted mean binary cross-entropy on logits plus `l2/2 * sum |W|^2`.
pub fn mlp_loss(model: &MlpModel, batch: &Minibatch<'_>) -> f64 {
    let m = batch.rows.len() as f64;
    let data: f64 = batch
        .rows
        .iter()
        .enumerate()
        .map(|(k, &row)| {
            let z = model.logit(batch.features, row);
            let c = batch.weights.map_or(1.0, |w| w[k]);
            c * (softplus(z) - batch.targets[k] * z)
        })
        .sum();
    data / m + 0.5 * batch.l2 * model.weight_sq_norm()
}

/// Exact gradient of [`mlp_loss`] by backpropagation.
pub fn mlp_gradient(model: &MlpModel, batch: &Minibatch<'_>) -> MlpGradient {
    let m = batch.rows.len() as f64;
    let mut grads: Vec<LayerGradient> = model
        .layers
        .iter()
        .map(|l| LayerGradient {
            w: l.w.iter().map(|w| batch.l2 * w).collect(),
            b: vec![0.0; l.n_out],
        })
        .collect();
    let mut loss = 0.0;
    let mut trace: Vec<Vec<f64>> = Vec::with_capacity(model.layers.len());
    for (k, &row) in batch.rows.iter().enumerate() {
        trace.clear();
        let z = model.forward(batch.features, row, Some(&mut trace));
        let c = batch.weights.map_or(1.0, |w| w[k]);
        let y = batch.targets[k];
        loss += c * (softplus(z) - y * z);

        let mut delta = vec![c * (sigmoid(z) - y) / m];
        for l in (0..model.layers.len()).rev() {
            let layer = &model.layers[l];
            let g = &mut grads[l];
            for (o, &d) in delta.iter().enumerate() {
                g.b[o] += d;
            }
            if l == 0 {
                let input = batch.features.row(row);
                for (o, &d) in delta.iter().enumerate() {
                    input.add_scaled_to(d, &mut g.w[o * layer.n_in..(o + 1) * layer.n_in]);
                }
                break;
            }
            let pre = &trace[l - 1];
            let mut back = vec![0.0; layer.n_in];
            for (o, &d) in delta.iter().enumerate() {
                let w = &layer.w[o * layer.n_in..(o + 1) * layer.n_in];
                let gw = &mut g.w[o * layer.n_in..(o + 1) * layer.n_in];
                for i in 0..layer.n_in {
                    gw[i] += d * pre[i].max(0.0);
                    back[i] += d * w[i];
                }
            }
            for (bk, &p) in back.iter_mut().zip(pre) {
                if p <= 0.0 {
                    *bk = 0.0;
                }
            }
            delta = back;
        }
    }
    MlpGradient {
        layers: grads,
        loss: loss / m + 0.5 * batch.l2 * model.weight_sq_norm(),
    }
}

/// Result of MLP training with the full-data loss before and after.
#[derive(Debug, Clone)]
pub struct MlpFit {
    pub model: MlpModel,
    pub initial_loss: f64,
    pub final_loss: f64,
}

pub fn train_mlp(
    x: &FeatureMatrix,
    labels: &[u8],
    cfg: &TrainConfig,
    hidden_sizes: &[usize],
) -> Result<MlpModel, ModelError> {
    train_mlp_traced(x, labels, cfg, hidden_sizes).map(|f| f.model)
}

/// Minibatch gradient descent on the class-weighted cross-entropy, reshuffling
/// every epoch.
pub fn train_mlp_traced(
    x: &FeatureMatrix,
    labels: &[u8],
    cfg: &TrainConfig,
    hidden_sizes: &[usize],
) -> Result<MlpFit, ModelError> {
    cfg.validate()?;
    if labels.len() != x.n_rows() {
        return Err(ModelError::DimensionMismatch {
            expected: x.n_rows(),
            got: labels.len(),
        });
    }
    let mut sizes = vec![x.n_cols()];
    sizes.extend_from_slice(hidden_sizes);
    sizes.push(1);
    validate_sizes(&sizes)?;
    let class_w = class_weights(labels, cfg.class_weighting)?;

    let n = labels.len();
    let targets: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
    let weights: Vec<f64> = labels.iter().map(|&l| class_w[l as usize]).collect();
    let all_rows: Vec<usize> = (0..n).collect();
    let full = Minibatch {
        features: x,
        rows: &all_rows,
        targets: &targets,
        weights: Some(&weights),
        l2: cfg.l2,
    };

    let mut model = MlpModel::init(&sizes, cfg.seed)?;
    let initial_loss = mlp_loss(&model, &full);
    let mut rng = rng_from_seed(cfg.seed ^ 0x5DEE_CE66);
    let mut order = all_rows.clone();
    let mut batch_targets = Vec::with_capacity(cfg.batch_size);
    let mut batch_weights = Vec::with_capacity(cfg.batch_size);
    for epoch in 0..cfg.epochs {
        shuffle(&mut rng, &mut order);
        for chunk in order.chunks(cfg.batch_size) {
            batch_targets.clear();
            batch_weights.clear();
            batch_targets.extend(chunk.iter().map(|&i| targets[i]));
            batch_weights.extend(chunk.iter().map(|&i| weights[i]));
            let grad = mlp_gradient(
                &model,
                &Minibatch {
                    features: x,
                    rows: chunk,
                    targets: &batch_targets,
                    weights: Some(&batch_weights),
                    l2: cfg.l2,
                },
            );
            if !grad.loss.is_finite() {
                return Err(ModelError::NonFiniteLoss { epoch });
            }
            for (layer, g) in model.layers.iter_mut().zip(&grad.layers) {
                for (w, gw) in layer.w.iter_mut().zip(&g.w) {
                    *w -= cfg.learning_rate * gw;
                }
                for (b, gb) in layer.b.iter_mut().zip(&g.b) {
                    *b -= cfg.learning_rate * gb;
                }
            }
        }
    }
    let final_loss = mlp_loss(&model, &full);
    if !final_loss.is_finite() || model.params().any(|p| !p.is_finite()) {
        return Err(ModelError::NonFiniteLoss { epoch: cfg.epochs });
    }
    Ok(MlpFit {
        model,
        initial_loss,
        final_loss,
    })
}
