use serde::{Deserialize, Serialize};

use super::{select_top_b, PoolView, QueryBatch, QueryError};
use crate::model::{train_linear_svm, ClassWeighting, TrainConfig};
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DalOptions {
    /// Number of sub-batches (each with a freshly trained discriminator).
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    #[serde(default = "default_dal_train")]
    pub train: TrainConfig,
}

fn default_rounds() -> usize {
    1
}

fn default_dal_train() -> TrainConfig {
    TrainConfig {
        epochs: 10,
        class_weighting: ClassWeighting::Balanced,
        ..TrainConfig::svm_default()
    }
}

impl Default for DalOptions {
    fn default() -> Self {
        DalOptions {
            rounds: default_rounds(),
            train: default_dal_train(),
        }
    }
}

/// Discriminative active learning. Splits `b` into `min(b, rounds)` near-even
/// sub-batches (larger ones first). For each, a calibrated linear SVM learns
/// to tell annotated rows (class 0, including earlier picks) from the
/// remaining pool (class 1); the pool positions with the highest
/// P(unannotated) are taken, ties to the lower position. Scores are those
/// probabilities.
pub fn select_discriminative(
    labeled: &PoolView<'_>,
    pool: &PoolView<'_>,
    b: usize,
    opts: &DalOptions,
    seed: u64,
) -> Result<QueryBatch, QueryError> {
    if labeled.rows.is_empty() {
        return Err(QueryError::EmptyLabeledSet);
    }
    let n = pool.rows.len();
    if n == 0 {
        return Err(QueryError::EmptyPool);
    }
    if b == 0 || opts.rounds == 0 {
        return Err(QueryError::InvalidBatchSize);
    }
    if n < b {
        return Err(QueryError::PoolTooSmall { pool: n, requested: b });
    }
    if labeled.features.n_cols() != pool.features.n_cols() {
        return Err(QueryError::Model(crate::model::ModelError::DimensionMismatch {
            expected: labeled.features.n_cols(),
            got: pool.features.n_cols(),
        }));
    }

    let labeled_x = labeled.features.select_rows(labeled.rows);
    let pool_x = pool.features.select_rows(pool.rows);
    let subs = b.min(opts.rounds);
    let mut taken = vec![false; n];
    let mut indices = Vec::with_capacity(b);
    let mut scores = Vec::with_capacity(b);
    for r in 0..subs {
        let size = b / subs + usize::from(r < b % subs);
        let picked: Vec<usize> = indices.clone();
        let remaining: Vec<usize> = (0..n).filter(|&p| !taken[p]).collect();
        let x = labeled_x
            .vstack(&pool_x.select_rows(&picked))?
            .vstack(&pool_x.select_rows(&remaining))?;
        let n_annotated = labeled.rows.len() + picked.len();
        let labels: Vec<u8> = (0..x.n_rows()).map(|i| (i >= n_annotated) as u8).collect();
        let mut cfg = opts.train.clone();
        cfg.seed = derive_seed(seed, &[r as u64]);
        let model = train_linear_svm(&x, &labels, &cfg)?;
        let p_unlabeled: Vec<f64> = (n_annotated..x.n_rows())
            .map(|i| model.proba_from_margin(model.margin(&x, i)))
            .collect();
        let top = select_top_b(&p_unlabeled, size)?;
        for (&k, &s) in top.indices.iter().zip(top.scores.as_deref().unwrap_or_default()) {
            let p = remaining[k];
            taken[p] = true;
            indices.push(p);
            scores.push(s);
        }
    }
    Ok(QueryBatch {
        indices,
        scores: Some(scores),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::FeatureMatrix;
    use crate::model::train_linear_svm;
    use crate::rng::{rng_from_seed, Gaussian};

    fn blob(n: usize, center: f64, seed: u64) -> Vec<f32> {
        let mut rng = rng_from_seed(seed);
        let mut g = Gaussian::new();
        (0..n * 2).map(|_| (center + g.sample(&mut rng)) as f32).collect()
    }

    #[test]
    fn picks_from_the_unexplored_cluster() {
        let mut vals = blob(40, 0.0, 1); // rows 0..40 annotated
        vals.extend(blob(40, 0.0, 2)); // pool 40..80, same cluster
        vals.extend(blob(10, 12.0, 3)); // pool 80..90, distant cluster
        let m = FeatureMatrix::dense(90, 2, vals).unwrap();
        let labeled: Vec<usize> = (0..40).collect();
        let pool: Vec<usize> = (40..90).collect();
        for seed in 0..5 {
            let got = select_discriminative(
                &PoolView { features: &m, rows: &labeled },
                &PoolView { features: &m, rows: &pool },
                1,
                &DalOptions::default(),
                seed,
            )
            .unwrap();
            assert!(got.indices[0] >= 40, "seed {seed}: picked pool position {:?}", got.indices);
        }
    }

    #[test]
    fn identical_distributions_take_calibrated_argmax() {
        let vals = blob(60, 0.0, 7);
        let m = FeatureMatrix::dense(60, 2, vals).unwrap();
        let labeled: Vec<usize> = (0..30).collect();
        let pool: Vec<usize> = (30..60).collect();
        let opts = DalOptions::default();
        let got = select_discriminative(
            &PoolView { features: &m, rows: &labeled },
            &PoolView { features: &m, rows: &pool },
            1,
            &opts,
            11,
        )
        .unwrap();
        let labels: Vec<u8> = (0..60).map(|i| (i >= 30) as u8).collect();
        let mut cfg = opts.train.clone();
        cfg.seed = derive_seed(11, &[0]);
        let model = train_linear_svm(&m, &labels, &cfg).unwrap();
        let probs: Vec<f64> = (30..60)
            .map(|i| model.proba_from_margin(model.margin(&m, i)))
            .collect();
        let best = probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let expected = probs.iter().position(|&p| p == best).unwrap();
        assert_eq!(got.indices, vec![expected]);
    }

    #[test]
    fn sub_batches_never_repeat() {
        let vals = blob(50, 0.0, 9);
        let m = FeatureMatrix::dense(50, 2, vals).unwrap();
        let labeled: Vec<usize> = (0..10).collect();
        let pool: Vec<usize> = (10..50).collect();
        let opts = DalOptions {
            rounds: 4,
            ..DalOptions::default()
        };
        let got = select_discriminative(
            &PoolView { features: &m, rows: &labeled },
            &PoolView { features: &m, rows: &pool },
            10,
            &opts,
            2,
        )
        .unwrap();
        let mut sorted = got.indices.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 10);
    }

    #[test]
    fn empty_labeled_set_errors() {
        let m = FeatureMatrix::dense(3, 1, vec![0.0, 1.0, 2.0]).unwrap();
        let none: Vec<usize> = vec![];
        let pool: Vec<usize> = vec![0, 1, 2];
        assert!(matches!(
            select_discriminative(
                &PoolView { features: &m, rows: &none },
                &PoolView { features: &m, rows: &pool },
                1,
                &DalOptions::default(),
                0
            ),
            Err(QueryError::EmptyLabeledSet)
        ));
    }
}
