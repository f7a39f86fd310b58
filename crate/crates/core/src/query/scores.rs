//! Uncertainty scores over per-class probability rows, and the top-`b`
//! dispatcher that turns scores into a query batch.

use std::cmp::Ordering;

use super::{QueryBatch, QueryError};

const SUM_TOLERANCE: f64 = 1e-6;

fn check_row(i: usize, row: &[f64], min_classes: usize) -> Result<(), QueryError> {
    if row.len() < min_classes {
        return Err(QueryError::MalformedDistribution(format!(
            "row {i} has {} classes, need at least {min_classes}",
            row.len()
        )));
    }
    if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(QueryError::MalformedDistribution(format!(
            "row {i} has a negative or non-finite entry"
        )));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > SUM_TOLERANCE {
        return Err(QueryError::MalformedDistribution(format!("row {i} sums to {sum}")));
    }
    Ok(())
}

/// `1 - max_c p_c`; in `[0, 1 - 1/C]`.
pub fn score_least_confidence(probs: &[Vec<f64>]) -> Result<Vec<f64>, QueryError> {
    probs
        .iter()
        .enumerate()
        .map(|(i, row)| {
            check_row(i, row, 1)?;
            Ok(1.0 - row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        })
        .collect()
}

/// Shannon entropy `-sum_c p_c ln p_c` with `0 ln 0 = 0`; in `[0, ln C]`.
pub fn score_entropy(probs: &[Vec<f64>]) -> Result<Vec<f64>, QueryError> {
    probs
        .iter()
        .enumerate()
        .map(|(i, row)| {
            check_row(i, row, 1)?;
            Ok(-row
                .iter()
                .filter(|&&p| p > 0.0)
                .map(|&p| p * p.ln())
                .sum::<f64>())
        })
        .collect()
}

/// `1 - (p_(1) - p_(2))`, the complement of the gap between the two most
/// likely classes; in `[0, 1]`.
pub fn score_breaking_ties(probs: &[Vec<f64>]) -> Result<Vec<f64>, QueryError> {
    probs
        .iter()
        .enumerate()
        .map(|(i, row)| {
            check_row(i, row, 2)?;
            let (mut first, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
            for &p in row {
                if p > first {
                    second = first;
                    first = p;
                } else if p > second {
                    second = p;
                }
            }
            Ok(1.0 - (first - second))
        })
        .collect()
}

/// Binary class distributions `(1 - p, p)` from membership probabilities.
pub fn binary_rows(membership: &[f64]) -> Vec<Vec<f64>> {
    membership.iter().map(|&p| vec![1.0 - p, p]).collect()
}

/// The `b` highest-scoring positions, best first; equal scores go to the
/// lower position. `b` larger than the pool is clamped.
pub fn select_top_b(scores: &[f64], b: usize) -> Result<QueryBatch, QueryError> {
    if b == 0 {
        return Err(QueryError::InvalidBatchSize);
    }
    if scores.is_empty() {
        return Err(QueryError::EmptyPool);
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(QueryError::MalformedDistribution(format!("score {i} is NaN")));
    }
    let better = |a: &usize, c: &usize| -> Ordering {
        scores[*c].total_cmp(&scores[*a]).then(a.cmp(c))
    };
    let mut order: Vec<usize> = (0..scores.len()).collect();
    let b = b.min(scores.len());
    if b < order.len() {
        order.select_nth_unstable_by(b - 1, better);
        order.truncate(b);
    }
    order.sort_unstable_by(better);
    Ok(QueryBatch {
        scores: Some(order.iter().map(|&i| scores[i]).collect()),
        indices: order,
    })
}
