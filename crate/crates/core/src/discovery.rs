//! The active slice discovery loop: seed, train, query, annotate, repeat
//! until the budget runs out.
//!
//! [`Discovery`] holds the loop state and exposes the round as two halves,
//! [`Discovery::next_batch`] and [`Discovery::apply`], so an interactive
//! annotator can sit between them. [`run_discovery`] drives the same halves
//! against an [`Oracle`].

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusError, Dataset, SliceVector};
use crate::eval::{balanced_accuracy, slice_accuracy, CurvePoint, EvalError, LearningCurve, SliceScore};
use crate::model::{train_slice_model, ClassifierSpec, ModelError, SliceModel};
use crate::query::{QueryContext, QueryError, StrategySpec};
use crate::rng::{derive_seed, rng_from_seed, sample_indices, stream};

#[derive(Debug, thiserror::Error)]
pub enum DiscoveryError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("record {0:?} has no ground-truth slice vector")]
    MissingGroundTruth(String),
    #[error("round {round}: oracle failed: {source}")]
    Oracle {
        round: usize,
        #[source]
        source: OracleError,
    },
    #[error("no batch is pending")]
    NoPendingBatch,
    #[error("example {0:?} is not in the pending batch")]
    NotPending(String),
    #[error("example {0:?} answered twice")]
    DuplicateAnswer(String),
    #[error("pending example {0:?} has no answer")]
    MissingAnswer(String),
    #[error("answer for {id:?} is invalid: {reason}")]
    BadAnswer { id: String, reason: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OracleError {
    #[error("no answer known for example {0:?}")]
    UnknownId(String),
    #[error("{0}")]
    Other(String),
}

/// Source of slice-membership answers.
pub trait Oracle {
    /// One slice vector per requested id, in request order.
    fn answer(&mut self, ids: &[&str]) -> Result<Vec<SliceVector>, OracleError>;
}

/// Answers from stored ground truth.
#[derive(Debug, Clone, Default)]
pub struct SimulatedOracle {
    answers: HashMap<String, SliceVector>,
}

impl SimulatedOracle {
    /// Every record must carry its slice vector.
    pub fn from_dataset(ds: &Dataset) -> Result<Self, DiscoveryError> {
        let mut answers = HashMap::with_capacity(ds.len());
        for rec in &ds.records {
            let s = rec
                .s
                .clone()
                .ok_or_else(|| DiscoveryError::MissingGroundTruth(rec.id.clone()))?;
            answers.insert(rec.id.clone(), s);
        }
        Ok(SimulatedOracle { answers })
    }

    pub fn from_answers(answers: HashMap<String, SliceVector>) -> Self {
        SimulatedOracle { answers }
    }
}

impl Oracle for SimulatedOracle {
    fn answer(&mut self, ids: &[&str]) -> Result<Vec<SliceVector>, OracleError> {
        ids.iter()
            .map(|id| {
                self.answers
                    .get(*id)
                    .cloned()
                    .ok_or_else(|| OracleError::UnknownId(id.to_string()))
            })
            .collect()
    }
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryConfig {
    pub strategy: StrategySpec,
    #[serde(default)]
    pub classifier: ClassifierSpec,
    /// Size of the initial annotated set, drawn from records with known
    /// slice labels. Not charged to the budget.
    pub seed_size: usize,
    pub batch_size: usize,
    /// Oracle answers allowed after the seed set.
    pub budget: usize,
    /// When false only the seed round and the final round are evaluated.
    #[serde(default = "default_true")]
    pub eval_every_round: bool,
    #[serde(default)]
    pub seed: u64,
}

impl DiscoveryConfig {
    pub fn validate(&self) -> Result<(), DiscoveryError> {
        let bad = |m: String| Err(DiscoveryError::InvalidConfig(m));
        if self.seed_size < 2 {
            return bad(format!("seed_size must be at least 2, got {}", self.seed_size));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        self.strategy.strategy.validate().map_err(DiscoveryError::InvalidConfig)?;
        self.classifier.validate()?;
        Ok(())
    }

    /// Short human-readable cell label, e.g. `least_confidence/svm`.
    pub fn label(&self) -> String {
        format!("{}/{}", self.strategy.strategy.name(), self.classifier.name())
    }
}

/// One annotated example: its row in the training set and its answers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub row: usize,
    pub answers: SliceVector,
}

/// A selected batch awaiting answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingBatch {
    pub rows: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<f64>>,
}

/// The annotated set, the unannotated pool and the budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolState {
    /// In annotation order: seed set first, then each batch.
    pub annotated: Vec<Annotation>,
    /// Ascending row numbers.
    pub unannotated: Vec<usize>,
    pub budget_initial: usize,
    pub budget_remaining: usize,
    /// Batches applied so far.
    pub round: usize,
    pub pending: Option<PendingBatch>,
}

impl PoolState {
    pub fn oracle_answers(&self) -> usize {
        self.budget_initial - self.budget_remaining
    }

    pub fn labels_used(&self) -> usize {
        self.annotated.len()
    }

    pub fn is_complete(&self) -> bool {
        self.pending.is_none() && (self.budget_remaining == 0 || self.unannotated.is_empty())
    }

    pub fn annotated_rows(&self) -> Vec<usize> {
        self.annotated.iter().map(|a| a.row).collect()
    }

    /// The state after answering the pending batch. `answers` must hold
    /// exactly one `(row, vector)` per pending row, in any order; on any
    /// error `self` is untouched.
    pub fn apply_answers(
        &self,
        answers: &[(usize, SliceVector)],
        k: usize,
        id_of: impl Fn(usize) -> String,
    ) -> Result<PoolState, DiscoveryError> {
        let pending = self.pending.as_ref().ok_or(DiscoveryError::NoPendingBatch)?;
        let wanted: HashSet<usize> = pending.rows.iter().copied().collect();
        let mut by_row: HashMap<usize, &SliceVector> = HashMap::with_capacity(answers.len());
        for (row, s) in answers {
            if !wanted.contains(row) {
                return Err(DiscoveryError::NotPending(id_of(*row)));
            }
            if s.len() != k || s.iter().any(|&v| v > 1) {
                return Err(DiscoveryError::BadAnswer {
                    id: id_of(*row),
                    reason: format!("expected {k} values in {{0,1}}"),
                });
            }
            if by_row.insert(*row, s).is_some() {
                return Err(DiscoveryError::DuplicateAnswer(id_of(*row)));
            }
        }
        if let Some(&missing) = pending.rows.iter().find(|r| !by_row.contains_key(r)) {
            return Err(DiscoveryError::MissingAnswer(id_of(missing)));
        }
        let mut next = self.clone();
        next.pending = None;
        next.annotated.extend(pending.rows.iter().map(|&row| Annotation {
            row,
            answers: by_row[&row].clone(),
        }));
        next.unannotated.retain(|r| !wanted.contains(r));
        next.budget_remaining -= pending.rows.len();
        next.round += 1;
        Ok(next)
    }
}

/// One query round as recorded in the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryLogEntry {
    /// Batches applied before this one was selected.
    pub round: usize,
    pub ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config: DiscoveryConfig,
    pub slice_names: Vec<String>,
    pub seed_ids: Vec<String>,
    pub labels_used: usize,
    pub oracle_answers: usize,
    pub curve: LearningCurve,
    pub query_log: Vec<QueryLogEntry>,
    #[serde(skip)]
    pub model: Option<SliceModel>,
}

impl RunResult {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("run results serialize");
        s.push('\n');
        s
    }
}

/// Loop state for one run over a fixed train/test pair. Every method that
/// needs the data takes the same datasets that were passed to
/// [`Discovery::start`].
#[derive(Debug, Clone)]
pub struct Discovery {
    cfg: DiscoveryConfig,
    state: PoolState,
    model: SliceModel,
    curve: LearningCurve,
    log: Vec<QueryLogEntry>,
    seed_ids: Vec<String>,
    row_of: HashMap<String, usize>,
}

fn check_pair(train: &Dataset, test: &Dataset) -> Result<(), DiscoveryError> {
    if train.dim() != test.dim() {
        return Err(DiscoveryError::InvalidConfig(format!(
            "train has {} features, test has {}",
            train.dim(),
            test.dim()
        )));
    }
    if train.slice_names != test.slice_names {
        return Err(DiscoveryError::InvalidConfig(
            "train and test track different slices".into(),
        ));
    }
    if train.k() == 0 {
        return Err(DiscoveryError::InvalidConfig("dataset tracks no slices".into()));
    }
    if test.is_empty() {
        return Err(DiscoveryError::InvalidConfig("test set is empty".into()));
    }
    if let Some(rec) = test.records.iter().find(|r| r.s.is_none()) {
        return Err(DiscoveryError::MissingGroundTruth(rec.id.clone()));
    }
    Ok(())
}

impl Discovery {
    /// Draws the seed set, trains on it and evaluates round 0.
    pub fn start(train: &Dataset, test: &Dataset, cfg: DiscoveryConfig) -> Result<Self, DiscoveryError> {
        cfg.validate()?;
        check_pair(train, test)?;
        let known: Vec<usize> = (0..train.len()).filter(|&i| train.records[i].s.is_some()).collect();
        if known.len() < cfg.seed_size {
            return Err(DiscoveryError::InvalidConfig(format!(
                "seed_size {} exceeds the {} training records with known slice labels",
                cfg.seed_size,
                known.len()
            )));
        }
        let mut rng = rng_from_seed(derive_seed(cfg.seed, &[stream::SEED_SET]));
        let seed_rows: Vec<usize> = sample_indices(&mut rng, known.len(), cfg.seed_size)
            .into_iter()
            .map(|p| known[p])
            .collect();
        let in_seed: HashSet<usize> = seed_rows.iter().copied().collect();
        let annotated = seed_rows
            .iter()
            .map(|&row| Annotation {
                row,
                answers: train.records[row].s.clone().expect("seed rows have labels"),
            })
            .collect();
        let state = PoolState {
            annotated,
            unannotated: (0..train.len()).filter(|r| !in_seed.contains(r)).collect(),
            budget_initial: cfg.budget,
            budget_remaining: cfg.budget,
            round: 0,
            pending: None,
        };
        let model = fit(train, &state, &cfg)?;
        let mut run = Discovery {
            seed_ids: seed_rows.iter().map(|&r| train.records[r].id.clone()).collect(),
            row_of: train
                .records
                .iter()
                .enumerate()
                .map(|(i, r)| (r.id.clone(), i))
                .collect(),
            curve: LearningCurve {
                slice_names: train.slice_names.clone(),
                points: Vec::new(),
            },
            log: Vec::new(),
            cfg,
            state,
            model,
        };
        run.curve.points.push(run.evaluate(test)?);
        Ok(run)
    }

    pub fn config(&self) -> &DiscoveryConfig {
        &self.cfg
    }

    pub fn state(&self) -> &PoolState {
        &self.state
    }

    pub fn model(&self) -> &SliceModel {
        &self.model
    }

    pub fn curve(&self) -> &LearningCurve {
        &self.curve
    }

    pub fn query_log(&self) -> &[QueryLogEntry] {
        &self.log
    }

    pub fn is_complete(&self) -> bool {
        self.state.is_complete()
    }

    /// Rows of the pending batch, selecting one first if none is pending.
    /// Returns an empty slice once the run is complete.
    pub fn next_batch(&mut self, train: &Dataset) -> Result<&[usize], DiscoveryError> {
        if self.state.pending.is_none() && !self.state.is_complete() {
            let batch = step_next_batch(train, &self.state, &self.model, &self.cfg)?;
            self.log.push(QueryLogEntry {
                round: self.state.round,
                ids: batch.rows.iter().map(|&r| train.records[r].id.clone()).collect(),
                scores: batch.scores.clone(),
            });
            self.state.pending = Some(batch);
        }
        Ok(self.state.pending.as_ref().map_or(&[], |p| &p.rows))
    }

    pub fn row_of(&self, id: &str) -> Option<usize> {
        self.row_of.get(id).copied()
    }

    /// Answers the pending batch, retrains from scratch and evaluates. The
    /// run is unchanged if anything fails.
    pub fn apply(
        &mut self,
        train: &Dataset,
        test: &Dataset,
        answers: &[(String, SliceVector)],
    ) -> Result<(), DiscoveryError> {
        let mut by_row = Vec::with_capacity(answers.len());
        for (id, s) in answers {
            let row = self
                .row_of(id)
                .ok_or_else(|| DiscoveryError::NotPending(id.clone()))?;
            by_row.push((row, s.clone()));
        }
        let state = self
            .state
            .apply_answers(&by_row, train.k(), |r| train.records[r].id.clone())?;
        let model = fit(train, &state, &self.cfg)?;
        let previous = std::mem::replace(&mut self.model, model);
        if self.cfg.eval_every_round || state.is_complete() {
            match self.evaluate_with(test, state.round, state.labels_used()) {
                Ok(point) => self.curve.points.push(point),
                Err(e) => {
                    self.model = previous;
                    return Err(e);
                }
            }
        }
        self.state = state;
        Ok(())
    }

    fn evaluate(&self, test: &Dataset) -> Result<CurvePoint, DiscoveryError> {
        self.evaluate_with(test, self.state.round, self.state.labels_used())
    }

    fn evaluate_with(
        &self,
        test: &Dataset,
        round: usize,
        labels_used: usize,
    ) -> Result<CurvePoint, DiscoveryError> {
        let pred = self.model.predict_membership(&test.features, 0.5)?;
        let slices = pred
            .iter()
            .enumerate()
            .map(|(j, p)| {
                let truth = test.slice_column(j).expect("test labels checked at start");
                Ok(SliceScore {
                    accuracy: slice_accuracy(p, &truth)?,
                    balanced_accuracy: balanced_accuracy(p, &truth)?,
                })
            })
            .collect::<Result<Vec<_>, EvalError>>()?;
        Ok(CurvePoint {
            round,
            labels_used,
            slices,
        })
    }

    /// The run so far, in the same shape as a finished run's result.
    pub fn snapshot(&self) -> RunResult {
        self.clone().into_result()
    }

    pub fn into_result(self) -> RunResult {
        RunResult {
            slice_names: self.curve.slice_names.clone(),
            seed_ids: self.seed_ids,
            labels_used: self.state.labels_used(),
            oracle_answers: self.state.oracle_answers(),
            curve: self.curve,
            query_log: self.log,
            config: self.cfg,
            model: Some(self.model),
        }
    }
}

/// Trains one classifier per slice on the annotated set. Slice `j` at round
/// `r` is seeded from `(seed, TRAIN, r, j)`.
fn fit(train: &Dataset, state: &PoolState, cfg: &DiscoveryConfig) -> Result<SliceModel, DiscoveryError> {
    let rows = state.annotated_rows();
    let x = train.features.select_rows(&rows);
    let k = train.k();
    let columns: Vec<Vec<u8>> = (0..k)
        .map(|j| state.annotated.iter().map(|a| a.answers[j]).collect())
        .collect();
    let seeds: Vec<u64> = (0..k)
        .map(|j| derive_seed(cfg.seed, &[stream::TRAIN, state.round as u64, j as u64]))
        .collect();
    Ok(train_slice_model(&x, &columns, &train.slice_names, &cfg.classifier, &seeds)?)
}

/// Selects the next batch for `state` with the current model: up to
/// `batch_size` rows, clamped to the remaining budget and pool. The query
/// draw is seeded from `(seed, QUERY, strategy seed, round)`.
pub fn step_next_batch(
    train: &Dataset,
    state: &PoolState,
    model: &SliceModel,
    cfg: &DiscoveryConfig,
) -> Result<PendingBatch, DiscoveryError> {
    let pool = &state.unannotated;
    let b = cfg.batch_size.min(state.budget_remaining).min(pool.len());
    if b == 0 {
        return Err(DiscoveryError::Query(if pool.is_empty() {
            QueryError::EmptyPool
        } else {
            QueryError::InvalidBatchSize
        }));
    }
    let probabilities = if cfg.strategy.strategy.needs_probabilities() {
        Some(model.predict_proba_rows(&train.features, pool)?)
    } else {
        None
    };
    let labeled = state.annotated_rows();
    let ctx = QueryContext {
        features: &train.features,
        labeled: &labeled,
        pool,
        probabilities: probabilities.as_deref(),
        batch_size: b,
        seed: derive_seed(
            cfg.seed,
            &[stream::QUERY, cfg.strategy.seed, state.round as u64],
        ),
    };
    let batch = cfg.strategy.select(&ctx)?;
    Ok(PendingBatch {
        rows: batch.indices.iter().map(|&p| pool[p]).collect(),
        scores: batch.scores,
    })
}

/// Runs the loop to completion against `oracle`.
pub fn run_discovery(
    train: &Dataset,
    test: &Dataset,
    cfg: &DiscoveryConfig,
    oracle: &mut dyn Oracle,
) -> Result<RunResult, DiscoveryError> {
    let mut run = Discovery::start(train, test, cfg.clone())?;
    while !run.is_complete() {
        let round = run.state().round;
        let rows = run.next_batch(train)?.to_vec();
        let ids: Vec<&str> = rows.iter().map(|&r| train.records[r].id.as_str()).collect();
        let answers = oracle
            .answer(&ids)
            .map_err(|source| DiscoveryError::Oracle { round, source })?;
        if answers.len() != ids.len() {
            return Err(DiscoveryError::Oracle {
                round,
                source: OracleError::Other(format!(
                    "{} answers for {} ids",
                    answers.len(),
                    ids.len()
                )),
            });
        }
        let pairs: Vec<(String, SliceVector)> = ids
            .iter()
            .map(|id| id.to_string())
            .zip(answers)
            .collect();
        run.apply(train, test, &pairs)?;
    }
    Ok(run.into_result())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic, split, SynthConfig};
    use crate::query::Strategy;
    use proptest::prelude::*;

    fn data(n: usize, seed: u64) -> (Dataset, Dataset) {
        let ds = generate_synthetic(&SynthConfig::uniform(n, 4, 1, 0.3, 6.0, seed)).unwrap();
        let sp = split(&ds, 0.25, seed).unwrap();
        (sp.train, sp.test)
    }

    fn cfg(strategy: Strategy, seed_size: usize, b: usize, k: usize, seed: u64) -> DiscoveryConfig {
        DiscoveryConfig {
            strategy: strategy.into(),
            classifier: ClassifierSpec::default(),
            seed_size,
            batch_size: b,
            budget: k,
            eval_every_round: true,
            seed,
        }
    }

    fn simulate(train: &Dataset, test: &Dataset, c: &DiscoveryConfig) -> RunResult {
        let mut oracle = SimulatedOracle::from_dataset(train).unwrap();
        run_discovery(train, test, c, &mut oracle).unwrap()
    }

    #[test]
    fn oracle_lookup() {
        let (train, _) = data(40, 1);
        let mut o = SimulatedOracle::from_dataset(&train).unwrap();
        let id = train.records[3].id.as_str();
        let first = o.answer(&[id]).unwrap();
        assert_eq!(first[0], *train.records[3].s.as_ref().unwrap());
        assert_eq!(o.answer(&[id]).unwrap(), first);
        assert_eq!(o.answer(&["nope"]), Err(OracleError::UnknownId("nope".into())));
    }

    #[test]
    fn oracle_requires_ground_truth() {
        let (mut train, _) = data(40, 1);
        train.records[0].s = None;
        assert!(matches!(
            SimulatedOracle::from_dataset(&train),
            Err(DiscoveryError::MissingGroundTruth(_))
        ));
    }

    #[test]
    fn zero_budget_single_point() {
        let (train, test) = data(80, 2);
        let r = simulate(&train, &test, &cfg(Strategy::Random, 10, 5, 0, 1));
        assert_eq!(r.curve.points.len(), 1);
        assert_eq!(r.curve.points[0].labels_used, 10);
        assert!(r.query_log.is_empty());
        assert_eq!(r.oracle_answers, 0);
    }

    #[test]
    fn budget_beyond_pool_annotates_everything() {
        let (train, test) = data(60, 3);
        let r = simulate(&train, &test, &cfg(Strategy::LeastConfidence, 5, 7, 1000, 1));
        assert_eq!(r.labels_used, train.len());
        assert_eq!(r.oracle_answers, train.len() - 5);
        assert_eq!(r.curve.points.last().unwrap().labels_used, train.len());
    }

    #[test]
    fn curve_length_and_log_rounds() {
        let (train, test) = data(200, 4);
        let r = simulate(&train, &test, &cfg(Strategy::PredictionEntropy, 10, 20, 90, 5));
        // ceil(90 / 20) = 5 batches, the last one partial.
        assert_eq!(r.curve.points.len(), 6);
        assert_eq!(r.query_log.len(), 5);
        assert_eq!(r.query_log[4].ids.len(), 10);
        let labels: Vec<usize> = r.curve.points.iter().map(|p| p.labels_used).collect();
        assert_eq!(labels, vec![10, 30, 50, 70, 90, 100]);
    }

    #[test]
    fn sparse_evaluation_only_keeps_ends() {
        let (train, test) = data(200, 4);
        let mut c = cfg(Strategy::Random, 10, 20, 60, 5);
        c.eval_every_round = false;
        let r = simulate(&train, &test, &c);
        let labels: Vec<usize> = r.curve.points.iter().map(|p| p.labels_used).collect();
        assert_eq!(labels, vec![10, 70]);
        assert_eq!(r.query_log.len(), 3);
    }

    #[test]
    fn runs_are_deterministic() {
        let (train, test) = data(150, 6);
        for s in [
            Strategy::BreakingTies,
            Strategy::LightweightCoreset,
            Strategy::EmbeddingKmeans { max_iterations: 20 },
            Strategy::Discriminative(Default::default()),
        ] {
            let c = cfg(s, 8, 6, 18, 9);
            let a = simulate(&train, &test, &c);
            let b = simulate(&train, &test, &c);
            assert_eq!(a.to_json(), b.to_json());
        }
    }

    #[test]
    fn separable_slice_learns_and_beats_random() {
        // Median over 5 seeds at K = 200, b = 20.
        let mut lc_acc = Vec::new();
        let mut rnd_acc = Vec::new();
        for seed in 0..5 {
            let ds = generate_synthetic(&SynthConfig::uniform(1000, 8, 1, 0.2, 10.0, seed)).unwrap();
            let sp = split(&ds, 0.2, seed).unwrap();
            let last = |r: RunResult| r.curve.points.last().unwrap().slices[0].accuracy;
            lc_acc.push(last(simulate(&sp.train, &sp.test, &cfg(Strategy::LeastConfidence, 10, 20, 200, seed))));
            rnd_acc.push(last(simulate(&sp.train, &sp.test, &cfg(Strategy::Random, 10, 20, 200, seed))));
        }
        let median = |v: &mut Vec<f64>| {
            v.sort_by(f64::total_cmp);
            v[2]
        };
        let (lc, rnd) = (median(&mut lc_acc), median(&mut rnd_acc));
        assert!(lc >= 0.95, "lc {lc}");
        assert!(lc >= rnd, "lc {lc} random {rnd}");
    }

    #[test]
    fn apply_is_atomic() {
        let (train, test) = data(100, 7);
        let mut run = Discovery::start(&train, &test, cfg(Strategy::Random, 6, 4, 20, 3)).unwrap();
        let rows = run.next_batch(&train).unwrap().to_vec();
        let before = run.state().clone();
        let answer = |r: usize| (train.records[r].id.clone(), train.records[r].s.clone().unwrap());
        let partial: Vec<_> = rows[..3].iter().map(|&r| answer(r)).collect();
        assert!(matches!(
            run.apply(&train, &test, &partial),
            Err(DiscoveryError::MissingAnswer(_))
        ));
        let mut dup = partial.clone();
        dup.push(answer(rows[0]));
        assert!(matches!(run.apply(&train, &test, &dup), Err(DiscoveryError::DuplicateAnswer(_))));
        let outsider = run.state().unannotated.iter().find(|r| !rows.contains(r)).copied().unwrap();
        let mut wrong = partial.clone();
        wrong.push(answer(outsider));
        assert!(matches!(run.apply(&train, &test, &wrong), Err(DiscoveryError::NotPending(_))));
        let mut short = partial.clone();
        short.push((train.records[rows[3]].id.clone(), vec![1, 1]));
        assert!(matches!(run.apply(&train, &test, &short), Err(DiscoveryError::BadAnswer { .. })));
        assert_eq!(run.state(), &before);

        let full: Vec<_> = rows.iter().map(|&r| answer(r)).collect();
        run.apply(&train, &test, &full).unwrap();
        assert_eq!(run.state().budget_remaining, before.budget_remaining - 4);
        assert!(matches!(run.apply(&train, &test, &full), Err(DiscoveryError::NoPendingBatch)));
    }

    #[test]
    fn oracle_failure_carries_round() {
        let (train, test) = data(100, 8);
        let mut partial: HashMap<String, SliceVector> = HashMap::new();
        let full = SimulatedOracle::from_dataset(&train).unwrap();
        // Only the first batch can be answered.
        let mut run = Discovery::start(&train, &test, cfg(Strategy::Random, 6, 5, 20, 1)).unwrap();
        for &r in run.next_batch(&train).unwrap() {
            let id = train.records[r].id.clone();
            partial.insert(id.clone(), full.answers[&id].clone());
        }
        let mut oracle = SimulatedOracle::from_answers(partial);
        let err = run_discovery(&train, &test, &cfg(Strategy::Random, 6, 5, 20, 1), &mut oracle).unwrap_err();
        assert!(matches!(err, DiscoveryError::Oracle { round: 1, .. }), "{err}");
    }

    #[test]
    fn invalid_configs() {
        let (train, test) = data(40, 1);
        let mut c = cfg(Strategy::Random, 1, 5, 10, 0);
        assert!(matches!(Discovery::start(&train, &test, c.clone()), Err(DiscoveryError::InvalidConfig(_))));
        c.seed_size = 4;
        c.batch_size = 0;
        assert!(matches!(Discovery::start(&train, &test, c.clone()), Err(DiscoveryError::InvalidConfig(_))));
        c.batch_size = 2;
        c.seed_size = train.len() + 1;
        assert!(matches!(Discovery::start(&train, &test, c), Err(DiscoveryError::InvalidConfig(_))));
    }

    #[test]
    fn config_json_defaults() {
        let c: DiscoveryConfig = serde_json::from_str(
            r#"{"strategy":{"kind":"random"},"seed_size":10,"batch_size":5,"budget":50}"#,
        )
        .unwrap();
        assert!(c.eval_every_round);
        assert_eq!(c.classifier, ClassifierSpec::default());
        assert_eq!(c.label(), "random/svm");
    }

    #[test]
    fn result_json_round_trip() {
        let (train, test) = data(80, 9);
        let r = simulate(&train, &test, &cfg(Strategy::LightweightCoreset, 6, 5, 15, 2));
        let back: RunResult = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back.to_json(), r.to_json());
        assert_eq!(back.curve, r.curve);
    }

    fn strategy_strategy() -> impl proptest::strategy::Strategy<Value = Strategy> {
        prop_oneof![
            Just(Strategy::LeastConfidence),
            Just(Strategy::PredictionEntropy),
            Just(Strategy::BreakingTies),
            Just(Strategy::Random),
            Just(Strategy::LightweightCoreset),
            Just(Strategy::EmbeddingKmeans { max_iterations: 10 }),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn conservation_and_budget(
            n in 20usize..70,
            seed_size in 2usize..8,
            b in 1usize..9,
            budget in 0usize..80,
            seed in any::<u64>(),
            strategy in strategy_strategy(),
        ) {
            let (train, test) = data(n, seed % 1000);
            let c = cfg(strategy, seed_size, b, budget, seed);
            let mut run = Discovery::start(&train, &test, c).unwrap();
            let total = train.len();
            let pool0 = run.state().unannotated.len();
            while !run.is_complete() {
                let rows = run.next_batch(&train).unwrap().to_vec();
                let s = run.state();
                prop_assert_eq!(s.annotated.len() + s.unannotated.len(), total);
                let answers: Vec<_> = rows
                    .iter()
                    .map(|&r| (train.records[r].id.clone(), train.records[r].s.clone().unwrap()))
                    .collect();
                let before = s.budget_remaining;
                run.apply(&train, &test, &answers).unwrap();
                prop_assert_eq!(run.state().budget_remaining, before - rows.len());
            }
            let s = run.state();
            let mut all: Vec<usize> = s.annotated_rows();
            all.extend(&s.unannotated);
            all.sort_unstable();
            prop_assert_eq!(all, (0..total).collect::<Vec<_>>());
            prop_assert_eq!(s.oracle_answers(), budget.min(pool0));
        }
    }
}
