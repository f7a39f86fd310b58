//! Query strategies: which unannotated examples go to the oracle next.
//!
//! Uncertainty strategies (least confidence, prediction entropy, breaking
//! ties) score every pool example from the current slice model's membership
//! probabilities; diversity strategies (embedding k-means, lightweight
//! coreset, discriminative) look only at the features; random sampling is
//! the baseline.

mod discriminative;
mod kmeans;
mod sampling;
mod scores;

use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusError, FeatureMatrix};
use crate::model::ModelError;

pub use discriminative::{select_discriminative, DalOptions};
pub use kmeans::{kmeans, select_kmeans, Clustering};
pub use sampling::{coreset_distribution, select_lightweight_coreset, select_random};
pub use scores::{
    binary_rows, score_breaking_ties, score_entropy, score_least_confidence, select_top_b,
};

#[derive(Debug, thiserror::Error)]
pub enum QueryError {
    #[error("malformed probability distribution: {0}")]
    MalformedDistribution(String),
    #[error("the unannotated pool is empty")]
    EmptyPool,
    #[error("pool has {pool} examples, fewer than the {requested} requested")]
    PoolTooSmall { pool: usize, requested: usize },
    #[error("batch size must be at least 1")]
    InvalidBatchSize,
    #[error("discriminative selection needs at least one annotated example")]
    EmptyLabeledSet,
    #[error("strategy {0} needs membership probabilities for the pool")]
    MissingProbabilities(&'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Selected pool positions, in selection order, with the strategy's score
/// for each where it defines one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryBatch {
    pub indices: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<f64>>,
}

/// A subset of a feature matrix's rows. Selectors return positions into
/// `rows`, not row numbers.
#[derive(Debug, Clone, Copy)]
pub struct PoolView<'a> {
    pub features: &'a FeatureMatrix,
    pub rows: &'a [usize],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    LeastConfidence,
    PredictionEntropy,
    BreakingTies,
    Random,
    EmbeddingKmeans {
        #[serde(default = "default_kmeans_iterations")]
        max_iterations: usize,
    },
    LightweightCoreset,
    Discriminative(DalOptions),
}

fn default_kmeans_iterations() -> usize {
    100
}

/// A strategy plus an extra seed mixed into its per-round randomness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySpec {
    #[serde(flatten)]
    pub strategy: Strategy,
    #[serde(default)]
    pub seed: u64,
}

impl From<Strategy> for StrategySpec {
    fn from(strategy: Strategy) -> Self {
        StrategySpec { strategy, seed: 0 }
    }
}

/// Everything a strategy may look at when choosing a batch.
#[derive(Debug, Clone, Copy)]
pub struct QueryContext<'a> {
    pub features: &'a FeatureMatrix,
    /// Rows already annotated.
    pub labeled: &'a [usize],
    /// Rows still unannotated; the returned positions index this slice.
    pub pool: &'a [usize],
    /// Membership probabilities over `pool`, one column per slice. Required
    /// by the uncertainty strategies only.
    pub probabilities: Option<&'a [Vec<f64>]>,
    pub batch_size: usize,
    pub seed: u64,
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::LeastConfidence => "least_confidence",
            Strategy::PredictionEntropy => "prediction_entropy",
            Strategy::BreakingTies => "breaking_ties",
            Strategy::Random => "random",
            Strategy::EmbeddingKmeans { .. } => "embedding_kmeans",
            Strategy::LightweightCoreset => "lightweight_coreset",
            Strategy::Discriminative(_) => "discriminative",
        }
    }

    pub fn needs_probabilities(&self) -> bool {
        matches!(
            self,
            Strategy::LeastConfidence | Strategy::PredictionEntropy | Strategy::BreakingTies
        )
    }

    pub fn validate(&self) -> Result<(), String> {
        match self {
            Strategy::EmbeddingKmeans { max_iterations: 0 } => {
                Err("embedding_kmeans needs max_iterations >= 1".into())
            }
            Strategy::Discriminative(opts) => {
                if opts.rounds == 0 {
                    return Err("discriminative needs rounds >= 1".into());
                }
                opts.train.validate().map_err(|e| e.to_string())
            }
            _ => Ok(()),
        }
    }
}

/// Per-example uncertainty for one strategy over several slices: each
/// slice's binary distribution `(1 - p, p)` is scored and the scores are
/// averaged across slices.
pub fn uncertainty_scores(strategy: &Strategy, columns: &[Vec<f64>]) -> Result<Vec<f64>, QueryError> {
    let scorer: fn(&[Vec<f64>]) -> Result<Vec<f64>, QueryError> = match strategy {
        Strategy::LeastConfidence => score_least_confidence,
        Strategy::PredictionEntropy => score_entropy,
        Strategy::BreakingTies => score_breaking_ties,
        _ => return Err(QueryError::MissingProbabilities(strategy.name())),
    };
    let Some(first) = columns.first() else {
        return Err(QueryError::MissingProbabilities(strategy.name()));
    };
    let mut total = vec![0.0; first.len()];
    for col in columns {
        for (t, s) in total.iter_mut().zip(scorer(&binary_rows(col))?) {
            *t += s;
        }
    }
    let k = columns.len() as f64;
    total.iter_mut().for_each(|t| *t /= k);
    Ok(total)
}

impl StrategySpec {
    pub fn select(&self, ctx: &QueryContext<'_>) -> Result<QueryBatch, QueryError> {
        let pool = PoolView {
            features: ctx.features,
            rows: ctx.pool,
        };
        let b = ctx.batch_size;
        match &self.strategy {
            s @ (Strategy::LeastConfidence | Strategy::PredictionEntropy | Strategy::BreakingTies) => {
                let probs = ctx
                    .probabilities
                    .ok_or(QueryError::MissingProbabilities(s.name()))?;
                select_top_b(&uncertainty_scores(s, probs)?, b)
            }
            Strategy::Random => select_random(ctx.pool.len(), b, ctx.seed),
            Strategy::EmbeddingKmeans { max_iterations } => {
                select_kmeans(&pool, b, *max_iterations, ctx.seed)
            }
            Strategy::LightweightCoreset => select_lightweight_coreset(&pool, b, ctx.seed),
            Strategy::Discriminative(opts) => select_discriminative(
                &PoolView {
                    features: ctx.features,
                    rows: ctx.labeled,
                },
                &pool,
                b,
                opts,
                ctx.seed,
            ),
        }
    }
}
