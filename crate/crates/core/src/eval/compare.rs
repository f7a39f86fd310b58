use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EvalError, Metric};
use crate::corpus::Dataset;
use crate::discovery::{run_discovery, DiscoveryConfig, RunResult, SimulatedOracle};

/// Median and interquartile range over seeds (linear interpolation between
/// order statistics).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

impl Spread {
    pub fn of(values: &[f64]) -> Spread {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Spread {
            median: quantile(&v, 0.5),
            q1: quantile(&v, 0.25),
            q3: quantile(&v, 0.75),
        }
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// One seed's run, reduced to one slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateSummary {
    pub seed: u64,
    pub best_accuracy: f64,
    /// Fewest labels at which `best_accuracy` was reached.
    pub labels_at_best: usize,
    pub final_accuracy: f64,
    pub best_balanced_accuracy: f64,
    pub final_balanced_accuracy: f64,
    pub labels_used: usize,
    /// `(labels_used, accuracy)` along the run.
    pub curve: Vec<(usize, f64)>,
}

impl ReplicateSummary {
    pub fn from_run(run: &RunResult, slice: usize) -> ReplicateSummary {
        let acc = run.curve.series(slice, Metric::Accuracy);
        let bal = run.curve.series(slice, Metric::BalancedAccuracy);
        let best = acc.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        let labels_at_best = acc
            .iter()
            .filter(|p| p.1 == best)
            .map(|p| p.0)
            .min()
            .unwrap_or(0);
        ReplicateSummary {
            seed: run.config.seed,
            best_accuracy: best,
            labels_at_best,
            final_accuracy: acc.last().map_or(f64::NAN, |p| p.1),
            best_balanced_accuracy: bal.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max),
            final_balanced_accuracy: bal.last().map_or(f64::NAN, |p| p.1),
            labels_used: run.labels_used,
            curve: acc,
        }
    }
}

/// All seeds of one (strategy, classifier) configuration on one slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub strategy: String,
    pub classifier: String,
    pub slice: String,
    pub config: DiscoveryConfig,
    pub best_accuracy: Spread,
    pub labels_at_best: Spread,
    pub final_accuracy: Spread,
    pub final_balanced_accuracy: Spread,
    pub replicates: Vec<ReplicateSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    /// Where the features came from.
    pub representation: String,
    pub seeds: Vec<u64>,
    pub cells: Vec<CellSummary>,
}

impl ComparisonReport {
    /// Aggregates `runs[spec][seed]`.
    pub fn from_runs(
        representation: &str,
        specs: &[DiscoveryConfig],
        seeds: &[u64],
        runs: &[Vec<RunResult>],
    ) -> ComparisonReport {
        let mut cells = Vec::new();
        for (spec, spec_runs) in specs.iter().zip(runs) {
            let Some(first) = spec_runs.first() else { continue };
            for (j, name) in first.slice_names.iter().enumerate() {
                let replicates: Vec<ReplicateSummary> =
                    spec_runs.iter().map(|r| ReplicateSummary::from_run(r, j)).collect();
                let spread = |f: fn(&ReplicateSummary) -> f64| {
                    Spread::of(&replicates.iter().map(f).collect::<Vec<_>>())
                };
                cells.push(CellSummary {
                    strategy: spec.strategy.strategy.name().to_string(),
                    classifier: spec.classifier.name().to_string(),
                    slice: name.clone(),
                    config: spec.clone(),
                    best_accuracy: spread(|r| r.best_accuracy),
                    labels_at_best: spread(|r| r.labels_at_best as f64),
                    final_accuracy: spread(|r| r.final_accuracy),
                    final_balanced_accuracy: spread(|r| r.final_balanced_accuracy),
                    replicates,
                });
            }
        }
        ComparisonReport {
            representation: representation.to_string(),
            seeds: seeds.to_vec(),
            cells,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }

    /// One row per cell: medians with the interquartile range in brackets.
    pub fn to_markdown(&self) -> String {
        let multi = self
            .cells
            .iter()
            .any(|c| c.slice != self.cells[0].slice);
        let mut out = format!("Representation: {}\n\n", self.representation);
        let slice_col = if multi { " Slice |" } else { "" };
        let slice_rule = if multi { "---|" } else { "" };
        out.push_str(&format!(
            "| Setup | Slice Classifier |{slice_col} Best Accuracy | Labeled Examples | Final Accuracy |\n"
        ));
        out.push_str(&format!("|---|---|{slice_rule}---|---|---|\n"));
        for c in &self.cells {
            let slice = if multi { format!(" {} |", c.slice) } else { String::new() };
            out.push_str(&format!(
                "| {} | {} |{slice} {:.4} [{:.4}, {:.4}] | {} [{}, {}] | {:.4} [{:.4}, {:.4}] |\n",
                c.strategy,
                c.classifier,
                c.best_accuracy.median,
                c.best_accuracy.q1,
                c.best_accuracy.q3,
                c.labels_at_best.median,
                c.labels_at_best.q1,
                c.labels_at_best.q3,
                c.final_accuracy.median,
                c.final_accuracy.q1,
                c.final_accuracy.q3,
            ));
        }
        out
    }
}

/// Runs every `(spec, seed)` pair with a simulated oracle on up to `jobs`
/// threads. Each run uses its spec with `seed` substituted. Results are
/// indexed `[spec][seed]`.
pub fn run_grid(
    train: &Dataset,
    test: &Dataset,
    specs: &[DiscoveryConfig],
    seeds: &[u64],
    jobs: usize,
) -> Result<Vec<Vec<RunResult>>, EvalError> {
    if specs.is_empty() || seeds.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    let cells: Vec<(usize, u64)> = (0..specs.len())
        .flat_map(|i| seeds.iter().map(move |&s| (i, s)))
        .collect();
    let run_one = |&(i, seed): &(usize, u64)| -> Result<RunResult, EvalError> {
        let fail = |e| EvalError::Run {
            spec: specs[i].label(),
            seed,
            source: Box::new(e),
        };
        let mut cfg = specs[i].clone();
        cfg.seed = seed;
        let mut oracle = SimulatedOracle::from_dataset(train).map_err(fail)?;
        run_discovery(train, test, &cfg, &mut oracle).map_err(fail)
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .expect("thread pool");
    let flat: Vec<RunResult> = pool.install(|| {
        cells
            .par_iter()
            .map(run_one)
            .collect::<Result<Vec<_>, _>>()
    })?;
    let mut flat = flat.into_iter();
    Ok(specs
        .iter()
        .map(|_| flat.by_ref().take(seeds.len()).collect())
        .collect())
}

/// [`run_grid`] followed by aggregation.
pub fn compare_strategies(
    train: &Dataset,
    test: &Dataset,
    specs: &[DiscoveryConfig],
    seeds: &[u64],
    jobs: usize,
) -> Result<ComparisonReport, EvalError> {
    let runs = run_grid(train, test, specs, seeds, jobs)?;
    Ok(ComparisonReport::from_runs(&train.provenance, specs, seeds, &runs))
}
