use serde::{Deserialize, Serialize};

use super::{check_dim, class_weights, sigmoid, ModelError, TrainConfig};
use crate::corpus::FeatureMatrix;
use crate::rng::{rng_from_seed, shuffle};

/// Linear membership classifier `margin(x) = w.x + b` with a logistic link
/// `P(member) = sigmoid(alpha * margin)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub w: Vec<f64>,
    pub b: f64,
    pub alpha: f64,
}

impl LinearModel {
    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn margin(&self, x: &FeatureMatrix, row: usize) -> f64 {
        x.row_dot(row, &self.w) + self.b
    }

    pub fn proba_from_margin(&self, margin: f64) -> f64 {
        sigmoid(self.alpha * margin)
    }

    pub fn margins(&self, x: &FeatureMatrix) -> Result<Vec<f64>, ModelError> {
        check_dim(self.dim(), x)?;
        Ok((0..x.n_rows()).map(|i| self.margin(x, i)).collect())
    }
}

/// Result of SVM training with the per-epoch objective trace.
#[derive(Debug, Clone)]
pub struct SvmFit {
    pub model: LinearModel,
    /// Full-data regularized hinge objective after each epoch.
    pub objective: Vec<f64>,
}

/// Regularized, class-weighted hinge objective
/// `l2/2 |w|^2 + (1/n) sum_i c_i max(0, 1 - y_i (w.x_i + b))`
/// with `y_i` in {-1, +1}.
pub fn hinge_objective(
    x: &FeatureMatrix,
    labels: &[u8],
    w: &[f64],
    b: f64,
    l2: f64,
    weights: [f64; 2],
) -> f64 {
    let n = labels.len() as f64;
    let loss: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let y = if l == 1 { 1.0 } else { -1.0 };
            weights[l as usize] * (1.0 - y * (x.row_dot(i, w) + b)).max(0.0)
        })
        .sum();
    0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>() + loss / n
}

pub fn train_linear_svm(
    x: &FeatureMatrix,
    labels: &[u8],
    cfg: &TrainConfig,
) -> Result<LinearModel, ModelError> {
    train_linear_svm_traced(x, labels, cfg).map(|fit| fit.model)
}

/// Stochastic subgradient descent on the hinge objective: one example per
/// step in a freshly shuffled order each epoch, step size
/// `learning_rate / sqrt(t)` for the global step count `t`. The hinge
/// subgradient step is followed by the exact proximal step of the L2 term,
/// `w <- w / (1 + step * l2)`, which stays stable for any `l2`. The bias is
/// not regularized.
pub fn train_linear_svm_traced(
    x: &FeatureMatrix,
    labels: &[u8],
    cfg: &TrainConfig,
) -> Result<SvmFit, ModelError> {
    cfg.validate()?;
    if labels.len() != x.n_rows() {
        return Err(ModelError::DimensionMismatch {
            expected: x.n_rows(),
            got: labels.len(),
        });
    }
    let weights = class_weights(labels, cfg.class_weighting)?;
    let n = labels.len();
    let mut w = vec![0.0; x.n_cols()];
    let mut b = 0.0;
    let mut rng = rng_from_seed(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut objective = Vec::with_capacity(cfg.epochs);
    let mut t = 0u64;
    for _ in 0..cfg.epochs {
        shuffle(&mut rng, &mut order);
        for &i in &order {
            t += 1;
            let step = cfg.learning_rate / (t as f64).sqrt();
            let y = if labels[i] == 1 { 1.0 } else { -1.0 };
            let row = x.row(i);
            if y * (row.dot(&w) + b) < 1.0 {
                let g = step * weights[labels[i] as usize] * y;
                row.add_scaled_to(g, &mut w);
                b += g;
            }
            let shrink = 1.0 / (1.0 + step * cfg.l2);
            w.iter_mut().for_each(|v| *v *= shrink);
        }
        objective.push(hinge_objective(x, labels, &w, b, cfg.l2, weights));
    }
    if w.iter().any(|v| !v.is_finite()) || !b.is_finite() {
        return Err(ModelError::NonFiniteLoss { epoch: cfg.epochs });
    }
    let margins: Vec<f64> = (0..n).map(|i| x.row_dot(i, &w) + b).collect();
    let alpha = fit_logistic_scale(&margins, labels);
    Ok(SvmFit {
        model: LinearModel { w, b, alpha },
        objective,
    })
}

const ALPHA_MIN: f64 = 1e-4;
const ALPHA_MAX: f64 = 1e4;

/// One-parameter Platt scaling: the `alpha > 0` maximizing the likelihood of
/// `sigmoid(alpha * margin)` against Platt's smoothed targets
/// `(n+ + 1)/(n+ + 2)` and `1/(n- + 2)`. The log-likelihood is concave in
/// `alpha`, so the root of its derivative is found by bisection (on a log
/// scale, clamped to `[1e-4, 1e4]`).
pub fn fit_logistic_scale(margins: &[f64], labels: &[u8]) -> f64 {
    let n_pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let n_neg = labels.len() as f64 - n_pos;
    let hi_target = (n_pos + 1.0) / (n_pos + 2.0);
    let lo_target = 1.0 / (n_neg + 2.0);
    let slope = |alpha: f64| -> f64 {
        margins
            .iter()
            .zip(labels)
            .map(|(&m, &l)| {
                let t = if l == 1 { hi_target } else { lo_target };
                (t - sigmoid(alpha * m)) * m
            })
            .sum()
    };
    if margins.iter().all(|&m| m == 0.0) {
        return 1.0;
    }
    let (mut lo, mut hi) = (ALPHA_MIN.ln(), ALPHA_MAX.ln());
    if slope(ALPHA_MIN) <= 0.0 {
        return ALPHA_MIN;
    }
    if slope(ALPHA_MAX) >= 0.0 {
        return ALPHA_MAX;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if slope(mid.exp()) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi)).exp()
}
