//! Per-slice membership classifiers. Each of the `k` slices gets an
//! independent binary model (one-vs-rest); all of them expose calibrated
//! membership probabilities for the uncertainty strategies.

mod linear;
mod mlp;
mod persist;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::FeatureMatrix;

pub use linear::{
    fit_logistic_scale, hinge_objective, train_linear_svm, train_linear_svm_traced, LinearModel,
    SvmFit,
};
pub use mlp::{
    mlp_gradient, mlp_loss, train_mlp, train_mlp_traced, DenseLayer, LayerGradient, Minibatch,
    MlpFit, MlpGradient, MlpModel,
};
pub use persist::{load_model, model_from_bytes, model_to_bytes, save_model};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("training labels contain a single class")]
    DegenerateLabels,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("loss became non-finite in epoch {epoch}; lower the learning rate")]
    NonFiniteLoss { epoch: usize },
    #[error("malformed model file: {0}")]
    Format(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeighting {
    #[default]
    None,
    /// Each class's loss is scaled by `n / (2 * n_class)`.
    Balanced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// L2 penalty on weights (not biases).
    pub l2: f64,
    /// Minibatch size; the SVM always steps on single examples.
    pub batch_size: usize,
    #[serde(default)]
    pub class_weighting: ClassWeighting,
    #[serde(default)]
    pub seed: u64,
}

impl TrainConfig {
    pub fn svm_default() -> Self {
        TrainConfig {
            epochs: 30,
            learning_rate: 0.1,
            l2: 1e-4,
            batch_size: 1,
            class_weighting: ClassWeighting::Balanced,
            seed: 0,
        }
    }

    pub fn mlp_default() -> Self {
        TrainConfig {
            epochs: 100,
            learning_rate: 1e-3,
            l2: 1e-4,
            batch_size: 32,
            class_weighting: ClassWeighting::Balanced,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.into()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return bad("l2 must be non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        Ok(())
    }
}

/// Which classifier family to train for every slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassifierSpec {
    Svm {
        #[serde(default = "TrainConfig::svm_default")]
        train: TrainConfig,
    },
    Mlp {
        #[serde(default = "TrainConfig::mlp_default")]
        train: TrainConfig,
        #[serde(default = "default_hidden")]
        hidden: Vec<usize>,
    },
}

fn default_hidden() -> Vec<usize> {
    vec![64]
}

impl Default for ClassifierSpec {
    fn default() -> Self {
        ClassifierSpec::Svm {
            train: TrainConfig::svm_default(),
        }
    }
}

impl ClassifierSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ClassifierSpec::Svm { .. } => "svm",
            ClassifierSpec::Mlp { .. } => "mlp",
        }
    }

    pub fn train_config(&self) -> &TrainConfig {
        match self {
            ClassifierSpec::Svm { train } | ClassifierSpec::Mlp { train, .. } => train,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.train_config().validate()?;
        if let ClassifierSpec::Mlp { hidden, .. } = self {
            if hidden.is_empty() {
                return Err(ModelError::InvalidConfig(
                    "an MLP needs at least one hidden layer; use the linear SVM otherwise".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Membership classifier for one slice.
#[derive(Debug, Clone, PartialEq)]
pub enum SliceClassifier {
    Linear(LinearModel),
    Mlp(MlpModel),
    /// Stand-in while the annotated labels hold a single class: a constant
    /// Laplace-smoothed prior `(n_pos + 1) / (n + 2)`, which always lands on
    /// the majority side of 0.5.
    Prior { p: f64 },
}

impl SliceClassifier {
    pub fn kind(&self) -> &'static str {
        match self {
            SliceClassifier::Linear(_) => "linear",
            SliceClassifier::Mlp(_) => "mlp",
            SliceClassifier::Prior { .. } => "prior",
        }
    }

    fn proba_row(&self, x: &FeatureMatrix, row: usize) -> f64 {
        match self {
            SliceClassifier::Linear(m) => m.proba_from_margin(m.margin(x, row)),
            SliceClassifier::Mlp(m) => sigmoid(m.logit(x, row)),
            SliceClassifier::Prior { p } => *p,
        }
    }
}

/// `k` independent slice classifiers over a common feature space.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceModel {
    pub dim: usize,
    pub slice_names: Vec<String>,
    pub classifiers: Vec<SliceClassifier>,
}

impl SliceModel {
    pub fn k(&self) -> usize {
        self.classifiers.len()
    }

    /// Membership probabilities, one column per slice, for the given rows.
    pub fn predict_proba_rows(
        &self,
        x: &FeatureMatrix,
        rows: &[usize],
    ) -> Result<Vec<Vec<f64>>, ModelError> {
        check_dim(self.dim, x)?;
        Ok(self
            .classifiers
            .iter()
            .map(|c| rows.par_iter().map(|&i| c.proba_row(x, i)).collect())
            .collect())
    }

    /// Membership probabilities for every row of `x`, one column per slice.
    pub fn predict_proba(&self, x: &FeatureMatrix) -> Result<Vec<Vec<f64>>, ModelError> {
        let rows: Vec<usize> = (0..x.n_rows()).collect();
        self.predict_proba_rows(x, &rows)
    }

    /// Thresholded probabilities; exact ties go to the positive class.
    pub fn predict_membership(
        &self,
        x: &FeatureMatrix,
        threshold: f64,
    ) -> Result<Vec<Vec<u8>>, ModelError> {
        Ok(self
            .predict_proba(x)?
            .into_iter()
            .map(|col| threshold_column(&col, threshold))
            .collect())
    }
}

pub fn threshold_column(probs: &[f64], threshold: f64) -> Vec<u8> {
    probs.iter().map(|&p| (p >= threshold) as u8).collect()
}

/// Trains one classifier per label column. Columns holding a single class
/// get a [`SliceClassifier::Prior`]. `seeds[j]` seeds slice `j`'s training.
pub fn train_slice_model(
    x: &FeatureMatrix,
    label_columns: &[Vec<u8>],
    slice_names: &[String],
    spec: &ClassifierSpec,
    seeds: &[u64],
) -> Result<SliceModel, ModelError> {
    spec.validate()?;
    let classifiers = label_columns
        .iter()
        .zip(seeds)
        .map(|(labels, &seed)| {
            let mut cfg = spec.train_config().clone();
            cfg.seed = seed;
            let fitted = match spec {
                ClassifierSpec::Svm { .. } => {
                    train_linear_svm(x, labels, &cfg).map(SliceClassifier::Linear)
                }
                ClassifierSpec::Mlp { hidden, .. } => {
                    train_mlp(x, labels, &cfg, hidden).map(SliceClassifier::Mlp)
                }
            };
            match fitted {
                Err(ModelError::DegenerateLabels) => {
                    let pos = labels.iter().filter(|&&l| l == 1).count() as f64;
                    Ok(SliceClassifier::Prior {
                        p: (pos + 1.0) / (labels.len() as f64 + 2.0),
                    })
                }
                other => other,
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SliceModel {
        dim: x.n_cols(),
        slice_names: slice_names.to_vec(),
        classifiers,
    })
}

/// Numerically stable logistic function; exactly 0.5 at 0.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn check_dim(expected: usize, x: &FeatureMatrix) -> Result<(), ModelError> {
    if x.n_cols() != expected {
        return Err(ModelError::DimensionMismatch {
            expected,
            got: x.n_cols(),
        });
    }
    Ok(())
}

/// Loss weights `[negative, positive]`; errors when only one class is present.
fn class_weights(labels: &[u8], mode: ClassWeighting) -> Result<[f64; 2], ModelError> {
    let n = labels.len() as f64;
    let pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    if labels.iter().any(|&l| l > 1) {
        return Err(ModelError::InvalidConfig("labels must be 0 or 1".into()));
    }
    if pos == 0.0 || pos == n {
        return Err(ModelError::DegenerateLabels);
    }
    Ok(match mode {
        ClassWeighting::None => [1.0, 1.0],
        ClassWeighting::Balanced => [n / (2.0 * (n - pos)), n / (2.0 * pos)],
    })
}
